#pragma once

#include "passiv/bm.hpp"
#include "passiv/csv.hpp"
#include "passiv/ode.hpp"
#include "passiv/pdflow.hpp"
#include "passiv/plants.hpp"
#include "passiv/rng.hpp"
#include "passiv/svm.hpp"
#include "passiv/tline.hpp"
