#ifndef SPAE_COMMON_HPP
#define SPAE_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spae {

// Feature scalar. The reference build uses 64-bit reals so gradient checks
// have headroom; configure with -DSPAE_REAL32 for a 32-bit engine.
#ifdef SPAE_REAL32
using real = float;
#else
using real = double;
#endif

enum class ErrorCode {
    OutOfRange,
    DuplicateSite,
    DimensionMismatch,
    TooLarge,
    BadGeometry,
    EvenFilter,
    MissingPattern,
    PatternNotSubset,
    PatternMismatch,
    ShapeMismatch,
    EmptyInput,
    EmptyCloud,
    DegenerateSample,
    ParseError,
    SpecInvalid,
    SpecMismatch,
    ConfigError,
    DataError,
    BadMagic,
    VersionUnsupported,
    Truncated,
    IoError,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void check(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) fail(code, what);
}

// Row-major dense matrix of feature rows; the storage behind every
// SparseTensor feature block, gradient buffer and parameter tensor.
struct Matrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<real> v;

    Matrix() = default;
    Matrix(int64_t r, int64_t c) : rows(r), cols(c), v(static_cast<size_t>(r * c), real(0)) {}

    real* row(int64_t r) { return v.data() + r * cols; }
    const real* row(int64_t r) const { return v.data() + r * cols; }
    real& at(int64_t r, int64_t c) { return v[r * cols + c]; }
    real at(int64_t r, int64_t c) const { return v[r * cols + c]; }
    int64_t size() const { return rows * cols; }
    void zero() { std::fill(v.begin(), v.end(), real(0)); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

} // namespace spae

#endif
