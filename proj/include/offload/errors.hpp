#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace offload {

struct FieldIssue {
    std::string field;
    std::string reason;
};

// Raised by validate_request with one entry per violated invariant.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<FieldIssue> issues);

    const std::vector<FieldIssue>& issues() const noexcept { return issues_; }
    bool mentions(const std::string& field) const;

private:
    std::vector<FieldIssue> issues_;
};

class StorageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// JSON or file-level parse failure. line is 0 when unknown.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string origin, std::size_t line, const std::string& what);
    std::size_t line() const noexcept { return line_; }
    const std::string& origin() const noexcept { return origin_; }

private:
    std::string origin_;
    std::size_t line_;
};

class InvariantError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class UnplaceableInstance : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class RegisterFull : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class UnknownTarget : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class NoFeasibleModulation : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class BindError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class TargetUnreachable : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class SchemaMismatch : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace offload
