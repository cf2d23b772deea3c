#pragma once

#include <functional>
#include <iostream>
#include <string>

namespace astod::log {

using Sink = std::function<void(const std::string&)>;

inline Sink& warning_sink() {
  static Sink sink = [](const std::string& msg) { std::cerr << "astod: warning: " << msg << '\n'; };
  return sink;
}

inline void warn(const std::string& msg) {
  if (warning_sink()) warning_sink()(msg);
}

}  // namespace astod::log
