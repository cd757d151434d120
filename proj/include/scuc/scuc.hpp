#pragma once

// Everything except the HTTP front end (http_service.hpp), which pulls in httplib.

#include "scuc/benchmark.hpp"
#include "scuc/compiler.hpp"
#include "scuc/errors.hpp"
#include "scuc/instance.hpp"
#include "scuc/lp.hpp"
#include "scuc/mip.hpp"
#include "scuc/mps.hpp"
#include "scuc/service.hpp"
#include "scuc/solution.hpp"
#include "scuc/synth.hpp"
