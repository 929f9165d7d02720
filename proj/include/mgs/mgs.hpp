#pragma once

#include "mgs/cfar.hpp"
#include "mgs/core.hpp"
#include "mgs/dipr.hpp"
#include "mgs/error.hpp"
#include "mgs/eval.hpp"
#include "mgs/fitter.hpp"
#include "mgs/geometry.hpp"
#include "mgs/grad.hpp"
#include "mgs/losses.hpp"
#include "mgs/math.hpp"
#include "mgs/renderer.hpp"
#include "mgs/synth.hpp"
