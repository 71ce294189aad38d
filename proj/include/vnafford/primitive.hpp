#pragma once

#include <string>

#include "vnafford/errors.hpp"

namespace vnaff {

// Six short-horizon gripper motions. Push-family moves along a direction and
// requires face contact on the moving part; pull-family grasps the handle and
// drags. The _up/_left variants move along the object base frame's +z/+y
// instead of the approach axis.
enum class PrimitiveType { kPush, kPushUp, kPushLeft, kPull, kPullUp, kPullLeft };

inline const char* to_string(PrimitiveType p) {
  switch (p) {
    case PrimitiveType::kPush: return "push";
    case PrimitiveType::kPushUp: return "push_up";
    case PrimitiveType::kPushLeft: return "push_left";
    case PrimitiveType::kPull: return "pull";
    case PrimitiveType::kPullUp: return "pull_up";
    case PrimitiveType::kPullLeft: return "pull_left";
  }
  return "push";
}

inline PrimitiveType primitive_from_string(const std::string& s) {
  if (s == "push") return PrimitiveType::kPush;
  if (s == "push_up") return PrimitiveType::kPushUp;
  if (s == "push_left") return PrimitiveType::kPushLeft;
  if (s == "pull") return PrimitiveType::kPull;
  if (s == "pull_up") return PrimitiveType::kPullUp;
  if (s == "pull_left") return PrimitiveType::kPullLeft;
  throw LoadError("unknown primitive: " + s);
}

inline bool is_pull_family(PrimitiveType p) {
  return p == PrimitiveType::kPull || p == PrimitiveType::kPullUp || p == PrimitiveType::kPullLeft;
}

}  // namespace vnaff
