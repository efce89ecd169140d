#pragma once

#include "acceptance.hpp"
#include "capacity.hpp"
#include "channels.hpp"
#include "coding.hpp"
#include "conditional_types.hpp"
#include "covering_packing.hpp"
#include "distortion.hpp"
#include "multiuser.hpp"
#include "probability.hpp"
#include "rate_distortion.hpp"
#include "types.hpp"

namespace sepkit {

inline constexpr const char* version = "0.1.0";

} // namespace sepkit
