#pragma once

#include "absope/abstraction.hpp"
#include "absope/error.hpp"
#include "absope/estimators.hpp"
#include "absope/generators.hpp"
#include "absope/harness.hpp"
#include "absope/io.hpp"
#include "absope/mdp.hpp"
#include "absope/partition.hpp"
#include "absope/population.hpp"
#include "absope/rng.hpp"
#include "absope/simulator.hpp"
#include "absope/solver.hpp"
