#pragma once

#include "fomlab/analysis.hpp"
#include "fomlab/casimir.hpp"
#include "fomlab/config.hpp"
#include "fomlab/constants.hpp"
#include "fomlab/dielectric.hpp"
#include "fomlab/electrostatics.hpp"
#include "fomlab/error.hpp"
#include "fomlab/hydrodynamics.hpp"
#include "fomlab/io.hpp"
#include "fomlab/numerics.hpp"
#include "fomlab/roughness.hpp"
#include "fomlab/simulator.hpp"
