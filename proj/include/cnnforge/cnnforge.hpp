#pragma once

#include "cnnforge/augmentor.hpp"
#include "cnnforge/classifier.hpp"
#include "cnnforge/decision.hpp"
#include "cnnforge/engine.hpp"
#include "cnnforge/error.hpp"
#include "cnnforge/imaging.hpp"
#include "cnnforge/reference.hpp"
#include "cnnforge/search.hpp"
#include "cnnforge/synth.hpp"
#include "cnnforge/templates.hpp"

namespace cnnforge {
inline constexpr const char* kVersion = "0.1.0";
}
