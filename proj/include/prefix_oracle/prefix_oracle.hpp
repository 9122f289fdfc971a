#pragma once

#include "prefix_oracle/rng.hpp"
#include "prefix_oracle/core.hpp"
#include "prefix_oracle/hidden_path.hpp"
#include "prefix_oracle/leader_trie.hpp"
#include "prefix_oracle/bridge.hpp"
#include "prefix_oracle/serialize.hpp"
#include "prefix_oracle/oracles.hpp"
#include "prefix_oracle/analysis.hpp"
#include "prefix_oracle/algorithms.hpp"
#include "prefix_oracle/experiments.hpp"
