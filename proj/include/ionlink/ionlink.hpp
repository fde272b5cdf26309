#pragma once

#include "ionlink/constants.hpp"
#include "ionlink/coupling.hpp"
#include "ionlink/dynamics.hpp"
#include "ionlink/energy.hpp"
#include "ionlink/equilibrium.hpp"
#include "ionlink/errors.hpp"
#include "ionlink/fitting.hpp"
#include "ionlink/modes.hpp"
#include "ionlink/optimize.hpp"
#include "ionlink/potential.hpp"
#include "ionlink/species.hpp"
#include "ionlink/version.hpp"
