#pragma once

#include "sgldp/basis.hpp"
#include "sgldp/errors.hpp"
#include "sgldp/fluid_ops.hpp"
#include "sgldp/integrators.hpp"
#include "sgldp/ldp.hpp"
#include "sgldp/mc.hpp"
#include "sgldp/rng.hpp"
