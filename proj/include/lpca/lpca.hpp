#pragma once

// Everything: environments, Q-network, Lagrange layer, selectors, baselines, harness.

#include "lpca/envs.hpp"
#include "lpca/errors.hpp"
#include "lpca/harness.hpp"
#include "lpca/joint_dp.hpp"
#include "lpca/lagrange.hpp"
#include "lpca/lambda_grid.hpp"
#include "lpca/parallel.hpp"
#include "lpca/qlearning.hpp"
#include "lpca/qnet.hpp"
#include "lpca/qprovider.hpp"
#include "lpca/random.hpp"
#include "lpca/selectors.hpp"
#include "lpca/tabular.hpp"
#include "lpca/whittle.hpp"
