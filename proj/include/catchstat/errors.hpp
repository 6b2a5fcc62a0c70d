#ifndef CATCHSTAT_ERRORS_HPP
#define CATCHSTAT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace catchstat {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- network ---
class DuplicateId : public Error {
public:
    explicit DuplicateId(const std::string& id)
        : Error("duplicate sub-catchment id: " + id) {}
};

class DanglingDownstream : public Error {
public:
    DanglingDownstream(const std::string& id, const std::string& target)
        : Error("sub-catchment " + id + " discharges into unknown id " + target) {}
};

class CycleDetected : public Error {
public:
    explicit CycleDetected(const std::string& ids)
        : Error("connectivity cycle through: " + ids) {}
};

class InvalidCatchment : public Error {
public:
    explicit InvalidCatchment(const std::string& msg) : Error(msg) {}
};

// --- source model / propagation ---
class UnknownCatchment : public Error {
public:
    explicit UnknownCatchment(const std::string& id)
        : Error("catchment not covered by source design: " + id) {}
};

class InvalidDesign : public Error {
public:
    explicit InvalidDesign(const std::string& msg) : Error(msg) {}
};

class NonFiniteResult : public Error {
public:
    explicit NonFiniteResult(const std::string& id)
        : Error("propagation produced a non-finite value at catchment " + id) {}
};

// --- likelihood ---
class NonFinite : public Error {
public:
    explicit NonFinite(const std::string& msg) : Error(msg) {}
};

class InvalidMeasurement : public Error {
public:
    explicit InvalidMeasurement(const std::string& msg) : Error(msg) {}
};

// --- laplace ---
class InnerDiverged : public Error {
public:
    InnerDiverged(int iterations, double grad_norm)
        : Error("inner mode search hit the iteration cap (" + std::to_string(iterations) +
                ") with gradient norm " + std::to_string(grad_norm)) {}
};

class IndefiniteHessian : public Error {
public:
    IndefiniteHessian() : Error("latent Hessian is not positive definite at the reported mode") {}
};

// --- predict ---
class NegativeExplainedVariance : public Error {
public:
    NegativeExplainedVariance(double s1, double s2)
        : Error("explained variance is negative: sigma_p2 " + std::to_string(s2) +
                " exceeds sigma_p1 " + std::to_string(s1)) {}
};

// --- crossval ---
class TooFewSampled : public Error {
public:
    TooFewSampled(std::size_t n, std::size_t k)
        : Error("cannot split " + std::to_string(n) + " sampled catchments into " +
                std::to_string(k) + " folds") {}
};

// --- synth ---
class DimensionTooLarge : public Error {
public:
    explicit DimensionTooLarge(std::size_t dim)
        : Error("quadrature latent dimension " + std::to_string(dim) + " exceeds the cap of 6") {}
};

// --- gwsource ---
class MissingField : public Error {
public:
    explicit MissingField(const std::string& msg) : Error("missing field: " + msg) {}
};

class NoData : public Error {
public:
    explicit NoData(const std::string& msg) : Error(msg) {}
};

// --- io / cli ---
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace catchstat

#endif  // CATCHSTAT_ERRORS_HPP
