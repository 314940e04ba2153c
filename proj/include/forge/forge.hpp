#pragma once

// Umbrella header.

#include "forge/assignment.hpp"
#include "forge/compiler.hpp"
#include "forge/distinguisher.hpp"
#include "forge/diversity.hpp"
#include "forge/error.hpp"
#include "forge/experiment.hpp"
#include "forge/fixed_scalar.hpp"
#include "forge/generator.hpp"
#include "forge/goldreich.hpp"
#include "forge/hardness.hpp"
#include "forge/linalg.hpp"
#include "forge/ltf_circuit.hpp"
#include "forge/mlp.hpp"
#include "forge/parallel.hpp"
#include "forge/predicate.hpp"
#include "forge/relu_net.hpp"
#include "forge/relu_net_json.hpp"
#include "forge/rng.hpp"
#include "forge/sample_set.hpp"
