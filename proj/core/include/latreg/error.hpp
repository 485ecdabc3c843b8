#ifndef LATREG_ERROR_HPP
#define LATREG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace latreg {

// Error categories map 1:1 onto the CLI exit codes (config=2, data=3,
// model=4, runtime=5).
enum class ErrorKind { Config, Data, Model, Runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  int exit_code() const {
    switch (kind_) {
      case ErrorKind::Config: return 2;
      case ErrorKind::Data: return 3;
      case ErrorKind::Model: return 4;
      case ErrorKind::Runtime: return 5;
    }
    return 5;
  }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& msg) { return Error(ErrorKind::Config, msg); }
inline Error data_error(const std::string& msg) { return Error(ErrorKind::Data, msg); }
inline Error model_error(const std::string& msg) { return Error(ErrorKind::Model, msg); }
inline Error runtime_error(const std::string& msg) { return Error(ErrorKind::Runtime, msg); }

}  // namespace latreg

#endif  // LATREG_ERROR_HPP
