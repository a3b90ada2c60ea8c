#pragma once

#include <stdexcept>
#include <string>

namespace busi {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// dataset
class NotFoundError : public Error { using Error::Error; };
class EmptyDatasetError : public Error { using Error::Error; };
class EmptyClassError : public Error { using Error::Error; };
class ClassTooSmallError : public Error { using Error::Error; };
class BadRatiosError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };

// preprocess
class DecodeError : public Error { using Error::Error; };
class EmptySplitError : public Error { using Error::Error; };

// models
class UnknownBackboneError : public Error { using Error::Error; };
class WeightsUnavailableError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class CheckpointError : public Error { using Error::Error; };

// training
class DivergedError : public Error {
public:
    DivergedError(const std::string& msg, int epoch, int batch)
        : Error(msg), epoch(epoch), batch(batch) {}
    int epoch;
    int batch;
};

// metrics
class LabelError : public Error { using Error::Error; };
class UndefinedMetricError : public Error { using Error::Error; };

// report / io
class IoError : public Error { using Error::Error; };
class EmptyInputError : public Error { using Error::Error; };

}  // namespace busi
