#pragma once

#include "owl/evm.hpp"
#include "owl/feature_io.hpp"
#include "owl/finch.hpp"
#include "owl/learners/learner.hpp"
#include "owl/linear_head.hpp"
#include "owl/manager.hpp"
#include "owl/metrics.hpp"
#include "owl/ood.hpp"
#include "owl/pipeline.hpp"
#include "owl/rng.hpp"
#include "owl/serialize.hpp"
#include "owl/stats.hpp"
#include "owl/types.hpp"
