#pragma once

#include <string>

namespace placer {

struct HttpResponse {
    int status = 0;
    std::string body;
};

// POST with bounded retries; throws a transport error (message includes the
// attempt count) when the endpoint stays unreachable or returns a non-2xx
// status other than 204.
HttpResponse http_post(const std::string& base_url, const std::string& path,
                       const std::string& body, const std::string& content_type,
                       int timeout_ms, int retries);

}  // namespace placer
