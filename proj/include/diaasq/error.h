#ifndef DIAASQ_ERROR_H_
#define DIAASQ_ERROR_H_

#include <stdexcept>
#include <string>

namespace diaasq {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data. Carries the dialogue id and a JSON-pointer-like path
// of the offending field.
class DataError : public Error {
 public:
  DataError(std::string doc_id, std::string path, const std::string& message)
      : Error(doc_id.empty() ? path + ": " + message
                             : "dialogue " + doc_id + ", " + path + ": " +
                                   message),
        doc_id_(std::move(doc_id)),
        path_(std::move(path)) {}

  const std::string& doc_id() const { return doc_id_; }
  const std::string& path() const { return path_; }

 private:
  std::string doc_id_;
  std::string path_;
};

// File could not be opened, read or written, or has a bad binary layout.
class IoError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor or grid dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace diaasq

#endif  // DIAASQ_ERROR_H_
