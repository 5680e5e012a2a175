#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace vad {

// Error taxonomy used across the library. Everything derives from std::exception
// so the CLI can catch one base and exit nonzero with the message.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct GeometryError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Raised when a kernel produces NaN or Inf.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when the training loss goes non-finite.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DiagnosticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Deterministic random source. All randomness in the library flows through
// this class so a run is reproducible from a single seed. Draws are built
// directly on the mt19937_64 output stream (which the standard pins down
// exactly) instead of std distributions, whose sequences differ between
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Box-Muller; consumes two draws per call.
  double normal(double mean, double stddev);
  bool bernoulli(double p);
  // Uniform integer in [0, n).
  std::uint64_t integer(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  // Child generator with a stream id folded into the seed. Lets callers hand
  // out independent sequences (init, dropout, shuffling, ...) from one seed.
  Rng derive(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace vad
