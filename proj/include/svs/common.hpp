#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace svs {

using Index = Eigen::Index;

// All dense data in this project is rank <= 2 and row-major: sequences are
// (time x channels) matrices, scalars are 1x1.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matf = Mat<float>;
using Matd = Mat<double>;
using Vecf = Vec<float>;
using Vecd = Vec<double>;

enum class Err {
  ShapeMismatch,
  NonScalarLoss,
  UnreadableFile,
  UnsupportedEncoding,
  TooShort,
  NoValidSplit,
  NonPositiveF0,
  NoteTooShort,
  InvalidSyllable,
  EmptyScore,
  MissingFile,
  SchemaViolation,
  InfeasibleTarget,
  UnknownSymbolId,
  TokenOutOfRange,
  LengthMismatch,
  EmptyInput,
  NoVoicedOverlap,
  NoLabeledData,
  BadCheckpoint,
  BadConfig,
};

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Err code, const std::string& what) {
  if (!ok) fail(code, what);
}

// Deterministic RNG. The mt19937_64 stream is fixed by the standard; the
// distributions below are hand-rolled so sequences do not depend on the
// standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(gen_() % span);
  }

  double normal(double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return spare_ * stddev;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta) * stddev;
  }

  // normal(0, stddev) restricted to [-2 stddev, 2 stddev]
  double trunc_normal(double stddev) {
    for (;;) {
      const double x = normal(stddev);
      if (std::abs(x) <= 2.0 * stddev) return x;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string save_state() const {
    std::ostringstream os;
    os << gen_ << " " << (have_spare_ ? 1 : 0) << " " << spare_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    int spare_flag = 0;
    is >> gen_ >> spare_flag >> spare_;
    if (!is) fail(Err::BadCheckpoint, "Rng::load_state: malformed state string");
    have_spare_ = spare_flag != 0;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

template <typename Scalar>
constexpr Scalar neg_inf() {
  return -std::numeric_limits<Scalar>::infinity();
}

// round half away from zero; every duration -> frame conversion uses this
inline Index round_frames(double x) {
  return static_cast<Index>(x >= 0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

}  // namespace svs
