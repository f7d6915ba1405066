#pragma once

#include "slcd/adam.hpp"
#include "slcd/autodiff.hpp"
#include "slcd/checkpoint.hpp"
#include "slcd/codec.hpp"
#include "slcd/common.hpp"
#include "slcd/config.hpp"
#include "slcd/consistency.hpp"
#include "slcd/dataset.hpp"
#include "slcd/denoiser.hpp"
#include "slcd/imageio.hpp"
#include "slcd/metrics.hpp"
#include "slcd/mlp.hpp"
#include "slcd/pipeline.hpp"
#include "slcd/rng.hpp"
#include "slcd/sampler.hpp"
#include "slcd/schedule.hpp"
#include "slcd/segmenter.hpp"
#include "slcd/tensor.hpp"
#include "slcd/toydata.hpp"
#include "slcd/translate.hpp"
#include "slcd/transport.hpp"
