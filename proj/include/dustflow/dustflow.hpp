#pragma once

#include "dustflow/error.hpp"
#include "dustflow/rng.hpp"
#include "dustflow/quadrature.hpp"
#include "dustflow/measure.hpp"
#include "dustflow/jumps.hpp"
#include "dustflow/engine.hpp"
#include "dustflow/kernels.hpp"
#include "dustflow/stats.hpp"
#include "dustflow/oracle.hpp"
#include "dustflow/mc.hpp"
#include "dustflow/verify.hpp"
