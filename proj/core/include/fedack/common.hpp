#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace fedack {

[[noreturn]] inline void fail(const std::string& msg) {
    throw std::runtime_error(msg);
}

inline void check(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

inline void warn(const std::string& msg) {
    std::cerr << "[warn] " << msg << std::endl;
}

} // namespace fedack
