#pragma once

#include "tcode/adam.hpp"
#include "tcode/autodiff.hpp"
#include "tcode/checkpoint.hpp"
#include "tcode/config.hpp"
#include "tcode/decomposition.hpp"
#include "tcode/diagnostics.hpp"
#include "tcode/environments.hpp"
#include "tcode/errors.hpp"
#include "tcode/evaluation.hpp"
#include "tcode/gradcheck.hpp"
#include "tcode/hash.hpp"
#include "tcode/hungarian.hpp"
#include "tcode/induced_action.hpp"
#include "tcode/mlp.hpp"
#include "tcode/objectives.hpp"
#include "tcode/pipelines.hpp"
#include "tcode/presets.hpp"
#include "tcode/rng.hpp"
#include "tcode/tensor.hpp"
#include "tcode/trainer.hpp"
