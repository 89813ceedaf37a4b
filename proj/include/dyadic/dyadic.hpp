#pragma once

#include "dyadic/errors.hpp"
#include "dyadic/tree_topology.hpp"
#include "dyadic/resistance_network.hpp"
#include "dyadic/flow_solver.hpp"
#include "dyadic/analytic_optima.hpp"
#include "dyadic/aug_lagrangian.hpp"
#include "dyadic/io.hpp"
#include "dyadic/verify.hpp"
