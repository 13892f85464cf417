#pragma once

#include <stdexcept>
#include <string>

namespace garden {

// Process exit classes: operation failures/violations exit 1, bad invocations
// and configuration problems exit 2.
enum class ExitClass { failure = 1, usage = 2 };

class Error : public std::runtime_error {
public:
    explicit Error(std::string msg, ExitClass ec = ExitClass::failure)
        : std::runtime_error(std::move(msg)), exit_class_(ec) {}

    ExitClass exit_class() const { return exit_class_; }

private:
    ExitClass exit_class_;
};

#define GARDEN_DEFINE_ERROR(NAME, CLASS)                                     \
    class NAME : public Error {                                              \
    public:                                                                  \
        explicit NAME(std::string msg)                                       \
            : Error(std::move(msg), ExitClass::CLASS) {}                     \
    }

GARDEN_DEFINE_ERROR(UsageError, usage);

} // namespace garden
