#pragma once

#include "lddu/autodiff.hpp"
#include "lddu/calibration.hpp"
#include "lddu/config.hpp"
#include "lddu/dataset.hpp"
#include "lddu/emotion_space.hpp"
#include "lddu/encoder.hpp"
#include "lddu/error.hpp"
#include "lddu/fusion.hpp"
#include "lddu/latent_distribution.hpp"
#include "lddu/layers.hpp"
#include "lddu/metrics.hpp"
#include "lddu/model.hpp"
#include "lddu/params.hpp"
#include "lddu/tensor.hpp"
#include "lddu/trainer.hpp"
