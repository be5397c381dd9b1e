#pragma once

#include "pne/asymptotics.hpp"
#include "pne/coefficients.hpp"
#include "pne/config.hpp"
#include "pne/constants.hpp"
#include "pne/eigensolver.hpp"
#include "pne/error.hpp"
#include "pne/evolution.hpp"
#include "pne/grid_kernel.hpp"
#include "pne/io.hpp"
#include "pne/kpp.hpp"
#include "pne/ode_oracle.hpp"
#include "pne/parallel.hpp"
#include "pne/run.hpp"
#include "pne/setup.hpp"
