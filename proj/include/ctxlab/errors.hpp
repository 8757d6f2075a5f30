#pragma once

// Error taxonomy shared by all ctxlab components. Everything derives from
// std::runtime_error / std::invalid_argument so callers can catch broadly,
// while tests can assert the precise failure class.

#include <stdexcept>
#include <string>

namespace ctxlab {

// Operand dimensions do not line up (matrix shapes, vector lengths, ...).
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A configuration value is out of its legal range, or a strategy
// combination is unsupported.
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A runtime input is invalid (out-of-vocab token id, empty vector, ...).
struct InputError : std::invalid_argument {
    explicit InputError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numerical breakdown: NaN mid-forward, fully masked softmax row, ...
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Paged block pool exhausted and growth capped.
struct OutOfBlocksError : std::runtime_error {
    explicit OutOfBlocksError(const std::string& msg) : std::runtime_error(msg) {}
};

// Attention requested over an empty KV cache.
struct EmptyContextError : std::runtime_error {
    explicit EmptyContextError(const std::string& msg) : std::runtime_error(msg) {}
};

// detokenize() saw a token id with no byte/special mapping.
struct DecodeError : std::runtime_error {
    explicit DecodeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures outside the weight container (reports, records, ...).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corpus file problems; carries the 1-based line number when one applies.
struct CorpusError : std::runtime_error {
    explicit CorpusError(const std::string& msg, long line = -1)
        : std::runtime_error(msg), line_number(line) {}
    long line_number;  // -1 when not line-specific
};

// Weight container load failures, one kind per distinct corruption class.
struct WeightLoadError : std::runtime_error {
    enum class Kind {
        io,         // file missing / unreadable
        bad_header, // header not parseable as the expected JSON
        bad_layout, // shapes/offsets inconsistent with header or config
        truncated,  // payload shorter than the header promises
        bad_values, // non-finite entries in the payload
    };

    WeightLoadError(Kind k, const std::string& msg)
        : std::runtime_error(msg), kind(k) {}

    Kind kind;
};

}  // namespace ctxlab
