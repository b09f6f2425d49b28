#pragma once

#include "abcfit/abc_engine.hpp"
#include "abcfit/config.hpp"
#include "abcfit/curve_io.hpp"
#include "abcfit/error.hpp"
#include "abcfit/external_model.hpp"
#include "abcfit/feature_matrix.hpp"
#include "abcfit/forward_model.hpp"
#include "abcfit/gbt.hpp"
#include "abcfit/metrics.hpp"
#include "abcfit/mlp.hpp"
#include "abcfit/param_space.hpp"
#include "abcfit/pipeline.hpp"
#include "abcfit/random.hpp"
#include "abcfit/serialization.hpp"
#include "abcfit/tpe.hpp"
#include "abcfit/trial_store.hpp"
