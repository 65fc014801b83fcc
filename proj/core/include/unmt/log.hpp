#pragma once

#include <fmt/core.h>

#include <cstdio>
#include <utility>

namespace unmt::log {

enum class Level { kQuiet = 0, kInfo = 1, kDebug = 2 };

Level level();
void set_level(Level lvl);

template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  if (level() >= Level::kInfo) {
    fmt::print(stderr, "[unmt] {}\n", fmt::format(f, std::forward<Args>(args)...));
    std::fflush(stderr);
  }
}

template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
  if (level() >= Level::kDebug) {
    fmt::print(stderr, "[unmt:debug] {}\n", fmt::format(f, std::forward<Args>(args)...));
  }
}

}  // namespace unmt::log
