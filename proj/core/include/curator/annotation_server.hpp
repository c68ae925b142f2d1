#pragma once

#include <memory>
#include <string>
#include <thread>

#include "curator/annotation.hpp"

namespace curator {

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::string scale_label = "naturalness and fluency";
    std::string guideline = "Rate how natural and fluent the speech sounds, from 1 (bad) to 5 (excellent).";
};

/// HTTP front of a RatingStore. See the API reference in the README for the
/// payloads. Responses never carry model names or server-side paths.
class AnnotationServer {
public:
    AnnotationServer(RatingStore& store, ServerConfig config);
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Binds the socket and returns the bound port. Throws IoError.
    int bind();
    /// Serves until stop(). bind() first.
    void serve();
    /// bind() plus serve() on a background thread.
    int start();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace curator
