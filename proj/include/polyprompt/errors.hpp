#pragma once

#include <stdexcept>
#include <string>

namespace polyprompt {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Configuration / argument problems (bad CLI values, unknown tags, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Dataset files missing or unreadable.
struct DatasetError : Error {
    using Error::Error;
};

// Prompt construction.
struct MissingCues : Error {
    using Error::Error;
};
struct BadArity : Error {
    using Error::Error;
};

// Gateway / transport.
struct GatewayError : Error {
    using Error::Error;
};
struct RateLimited : GatewayError {
    using GatewayError::GatewayError;
};
struct AuthFailure : GatewayError {
    using GatewayError::GatewayError;
};
struct MalformedResponse : GatewayError {
    using GatewayError::GatewayError;
};
struct ScriptMiss : GatewayError {
    using GatewayError::GatewayError;
};
struct CacheMiss : GatewayError {
    using GatewayError::GatewayError;
};

// Translation.
struct EmptyTranslation : Error {
    using Error::Error;
};

// Tasks.
struct InvalidChoiceSet : Error {
    using Error::Error;
};
struct EmptySet : Error {
    using Error::Error;
};

// Annotation.
struct InvalidRegion : Error {
    using Error::Error;
};

// Metrics.
struct EmptyDistribution : Error {
    using Error::Error;
};
struct ZeroNormVector : Error {
    using Error::Error;
};
struct LabelMismatch : Error {
    using Error::Error;
};

// Embeddings.
struct ProviderError : Error {
    using Error::Error;
};

// Pipeline.
struct LengthMismatch : Error {
    using Error::Error;
};
struct MalformedCsv : Error {
    using Error::Error;
};
struct InsufficientPairs : Error {
    InsufficientPairs(const std::string& what, long long avail)
        : Error(what), available(avail) {}
    long long available;
};

}  // namespace polyprompt
