#pragma once

#include <stdexcept>
#include <string>

namespace p2pm {

// Radial-graph problems: cycles, disconnected buses, bad bus ids.
class StructuralError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A physical invariant was broken; usually this means a solver bug.
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(const std::string& agent, const std::string& what)
        : std::runtime_error(what), agent_(agent) {}
    [[nodiscard]] const std::string& agent() const noexcept { return agent_; }

private:
    std::string agent_;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& file, int line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
          file_(file), line_(line) {}
    [[nodiscard]] const std::string& file() const noexcept { return file_; }
    [[nodiscard]] int line() const noexcept { return line_; }

private:
    std::string file_;
    int line_;
};

class OracleScaleError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double final_measure)
        : std::runtime_error(what), final_measure_(final_measure) {}
    [[nodiscard]] double final_measure() const noexcept { return final_measure_; }

private:
    double final_measure_;
};

}  // namespace p2pm
