#pragma once

#include "simt/common.hpp"
#include "simt/config.hpp"
#include "simt/corpus.hpp"
#include "simt/divergence.hpp"
#include "simt/metrics.hpp"
#include "simt/parallel.hpp"
#include "simt/policy.hpp"
#include "simt/policy_rules.hpp"
#include "simt/simulator.hpp"
#include "simt/tiny_model.hpp"
#include "simt/translation.hpp"
