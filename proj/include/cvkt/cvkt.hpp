#pragma once

#include "cvkt/baselines.hpp"
#include "cvkt/benchmark.hpp"
#include "cvkt/data.hpp"
#include "cvkt/dataset.hpp"
#include "cvkt/errors.hpp"
#include "cvkt/features.hpp"
#include "cvkt/kernels.hpp"
#include "cvkt/metrics.hpp"
#include "cvkt/modelselect.hpp"
#include "cvkt/transfer.hpp"
