// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy. Every library failure derives from ctxprompt::Error so
// callers (the CLI in particular) can map failures onto exit codes.

#pragma once

#include <stdexcept>
#include <string>

namespace ctxprompt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or inner-dimension disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Operation misuse: double backward, non-scalar loss, ...
class StateError : public Error {
 public:
  using Error::Error;
};

// Sequence would exceed the model's position table.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class EmptyLossError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in gradients or losses.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Adapter checkpoint bound to a different backbone than the one supplied.
class ChecksumMismatchError : public Error {
 public:
  using Error::Error;
};

// A hard runtime invariant was violated (e.g. a frozen backbone changed).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctxprompt
