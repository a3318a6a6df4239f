#pragma once

#include <stdexcept>
#include <string>

namespace onloadrt {

// Base class for every error raised by this library. Callers that do not
// care about the precise failure mode can catch this one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- graph / model ----------------------------------------------------

// A node references an id that is not declared before it (forward edge),
// which would make the declared order non-topological.
struct CycleError : Error { using Error::Error; };

// The model names an operator kind this engine does not implement.
struct UnknownOperator : Error { using Error::Error; };

// A split id or index lies outside the valid range.
struct RangeError : Error { using Error::Error; };

// The model file (or weight blob) is structurally invalid.
struct ModelFormatError : Error { using Error::Error; };

// ---- engine ------------------------------------------------------------

// An execution plan needs a tensor that is neither produced inside the
// plan's range nor supplied through its injection map.
struct MissingDependency : Error { using Error::Error; };

// Operator inputs have shapes the operator cannot consume.
struct ShapeError : Error { using Error::Error; };

// ---- packing -----------------------------------------------------------

// Quantization input contains NaN or +/-inf.
struct NonFiniteInput : Error { using Error::Error; };

// A packed record's header does not agree with the data that follows it.
struct HeaderMismatch : Error { using Error::Error; };

// A quantized value does not fit in the declared bit width.
struct ValueOverflow : Error { using Error::Error; };

// Compressed payload cannot be decoded back to the declared raw length.
struct CorruptPayload : Error { using Error::Error; };

// ---- profiler ----------------------------------------------------------

// Load scaling needs a nonzero offline baseline time.
struct ZeroOfflineTime : Error { using Error::Error; };

// No fresh real-time sample and no historical average for the link.
struct NoEstimate : Error { using Error::Error; };

// The profile has no row for the requested (split, bitwidth) pair.
struct MissingProfileEntry : Error { using Error::Error; };

// ---- scheduler ---------------------------------------------------------

// schedule() was invoked with an empty configuration space.
struct EmptySpace : Error { using Error::Error; };

// ---- runtime -----------------------------------------------------------

// Socket-level failure: connect, send, receive, or unexpected close.
struct NetworkError : Error { using Error::Error; };

// The peer answered with an error response instead of a result.
struct ServerError : Error { using Error::Error; };

// Peer speaks an incompatible protocol version or model revision.
struct VersionMismatch : Error { using Error::Error; };

// A frame was received but its contents do not parse as a valid message.
struct MalformedMessage : Error { using Error::Error; };

}  // namespace onloadrt
