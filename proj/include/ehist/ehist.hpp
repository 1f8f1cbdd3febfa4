#pragma once

#include "ehist/errors.hpp"
#include "ehist/linalg.hpp"
#include "ehist/histories.hpp"
#include "ehist/twostate.hpp"
#include "ehist/optimize.hpp"
#include "ehist/bell.hpp"
#include "ehist/scenarios.hpp"
#include "ehist/io.hpp"
