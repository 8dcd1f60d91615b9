#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ttp {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bundle, JSONL record, index or model file.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, std::string object_id = {})
        : Error(object_id.empty() ? what : what + " (object " + object_id + ")"),
          object_id_(std::move(object_id)) {}

    const std::string& object_id() const noexcept { return object_id_; }

private:
    std::string object_id_;
};

/// Caller violated an operation precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Stored file failed its integrity check.
class ChecksumError : public Error {
public:
    using Error::Error;
};

/// A page could not be obtained from cache or network.
class FetchError : public Error {
public:
    FetchError(const std::string& url, const std::string& reason)
        : Error("fetch failed for " + url + ": " + reason), url_(url) {}

    const std::string& url() const noexcept { return url_; }

private:
    std::string url_;
};

/// Remote call failed; `attempts` counts every try including the last one.
class TransportError : public Error {
public:
    TransportError(const std::string& what, std::size_t attempts, bool retryable)
        : Error(what + " after " + std::to_string(attempts) + " attempt(s)"),
          attempts_(attempts),
          retryable_(retryable) {}

    std::size_t attempts() const noexcept { return attempts_; }
    bool retryable() const noexcept { return retryable_; }

private:
    std::size_t attempts_;
    bool retryable_;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace ttp
