#ifndef RERAND_VERSION_HPP
#define RERAND_VERSION_HPP

namespace rerand {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rerand

#endif  // RERAND_VERSION_HPP
