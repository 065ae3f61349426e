#ifndef BRRF_BRRF_HPP
#define BRRF_BRRF_HPP

#include "brrf/error.hpp"
#include "brrf/random.hpp"
#include "brrf/tensor_io.hpp"
#include "brrf/oversegment.hpp"
#include "brrf/rep_prep.hpp"
#include "brrf/seggraph.hpp"
#include "brrf/hierarchy.hpp"
#include "brrf/classifier.hpp"
#include "brrf/merge_engine.hpp"
#include "brrf/eval.hpp"
#include "brrf/synth.hpp"
#include "brrf/pipeline.hpp"

#endif
