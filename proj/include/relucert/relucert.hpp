#pragma once

// Umbrella header: the whole library in one include.

#include "relucert/acas.hpp"
#include "relucert/bound_rates.hpp"
#include "relucert/errors.hpp"
#include "relucert/linalg.hpp"
#include "relucert/lp.hpp"
#include "relucert/network.hpp"
#include "relucert/nnet_io.hpp"
#include "relucert/relaxation.hpp"
#include "relucert/splitting.hpp"
#include "relucert/verifier.hpp"
