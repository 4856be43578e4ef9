#pragma once

#include "msgnet/attention.hpp"
#include "msgnet/autodiff.hpp"
#include "msgnet/checkpoint.hpp"
#include "msgnet/data.hpp"
#include "msgnet/delta_experiment.hpp"
#include "msgnet/errors.hpp"
#include "msgnet/graph.hpp"
#include "msgnet/model.hpp"
#include "msgnet/ops.hpp"
#include "msgnet/parameters.hpp"
#include "msgnet/random.hpp"
#include "msgnet/reports.hpp"
#include "msgnet/run_config.hpp"
#include "msgnet/spectral.hpp"
#include "msgnet/tensor.hpp"
#include "msgnet/training.hpp"
