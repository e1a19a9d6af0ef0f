#ifndef MFSTEER_ERRORS_HPP
#define MFSTEER_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace mfsteer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// A matrix that must be inverted is singular to working precision.
class SingularError : public Error {
public:
    SingularError(const std::string& what, double rcond)
        : Error(what + " (reciprocal condition " + std::to_string(rcond) + ")"), rcond_(rcond) {}
    double rcond() const { return rcond_; }

private:
    double rcond_;
};

/// Input outside the domain of an operation (indefinite matrix, time out of range, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// An integration produced a non-finite value.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, double time)
        : Error(what + " at t=" + std::to_string(time)), time_(time) {}
    double time() const { return time_; }

private:
    double time_;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, int iterations)
        : Error(what + " after " + std::to_string(iterations) + " iterations"),
          iterations_(iterations) {}
    int iterations() const { return iterations_; }

private:
    int iterations_;
};

/// A post-condition that the construction guarantees was found violated.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// A design problem with no solution; residual measures how far off it is.
class DesignError : public Error {
public:
    DesignError(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

/// Particle simulation produced a non-finite state.
class BlowUpError : public Error {
public:
    BlowUpError(double time, long particle)
        : Error("non-finite particle state at t=" + std::to_string(time) +
                " (particle " + std::to_string(particle) + ")"),
          time_(time), particle_(particle) {}
    double time() const { return time_; }
    long particle() const { return particle_; }

private:
    double time_;
    long particle_;
};

/// Scenario validation failure carrying every problem found.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : Error(join(problems)), problems_(std::move(problems)) {}
    const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& items) {
        std::string out;
        for (const auto& item : items) {
            if (!out.empty()) out += "; ";
            out += item;
        }
        return out;
    }
    std::vector<std::string> problems_;
};

}  // namespace mfsteer

#endif  // MFSTEER_ERRORS_HPP
