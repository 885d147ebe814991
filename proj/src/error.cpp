#include "geotrack/error.hpp"

#include <iostream>
#include <mutex>

namespace geotrack {

namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& current_handler() {
  static WarningHandler h = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return h;
}

}  // namespace

void warn(std::string_view message) {
  WarningHandler h;
  {
    std::lock_guard lock(handler_mutex());
    h = current_handler();
  }
  if (h) h(message);
}

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(handler_mutex());
  auto previous = std::move(current_handler());
  current_handler() = std::move(handler);
  return previous;
}

}  // namespace geotrack
