#pragma once

#include "apfmpc/dynamics.hpp"
#include "apfmpc/errors.hpp"
#include "apfmpc/geometry.hpp"
#include "apfmpc/mpc.hpp"
#include "apfmpc/potential_field.hpp"
#include "apfmpc/qp_solver.hpp"
#include "apfmpc/reference.hpp"
#include "apfmpc/scenario_io.hpp"
#include "apfmpc/simulation.hpp"
