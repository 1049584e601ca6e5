#pragma once

// Umbrella header for the whole library.

#include "gsot/barycenter.hpp"
#include "gsot/core.hpp"
#include "gsot/error.hpp"
#include "gsot/io.hpp"
#include "gsot/lp_oracle.hpp"
#include "gsot/regularizers.hpp"
#include "gsot/transport.hpp"
