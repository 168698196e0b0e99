#pragma once

#include "epf/backtest.hpp"
#include "epf/baselines.hpp"
#include "epf/common.hpp"
#include "epf/features.hpp"
#include "epf/forecast.hpp"
#include "epf/forecasters.hpp"
#include "epf/garch.hpp"
#include "epf/inference.hpp"
#include "epf/ingest.hpp"
#include "epf/lasso.hpp"
#include "epf/metrics.hpp"
#include "epf/network.hpp"
#include "epf/serialization.hpp"
#include "epf/synthetic.hpp"
#include "epf/train.hpp"
