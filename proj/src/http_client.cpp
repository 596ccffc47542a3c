#include "http_client.hpp"

#include <httplib.h>

#include "errors.hpp"

namespace placer {

HttpResponse http_post(const std::string& base_url, const std::string& path,
                       const std::string& body, const std::string& content_type,
                       int timeout_ms, int retries) {
    httplib::Client client(base_url);
    client.set_connection_timeout(0, timeout_ms * 1000);
    client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    client.set_write_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);

    int attempts = retries + 1;
    std::string last_issue;
    for (int attempt = 1; attempt <= attempts; attempt++) {
        auto res = client.Post(path, body, content_type);
        if (!res) {
            last_issue = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 204 || (res->status >= 200 && res->status < 300)) {
            return HttpResponse{res->status, res->body};
        }
        last_issue = "HTTP " + std::to_string(res->status);
    }
    fail(ErrorKind::Transport, "POST " + base_url + path + " failed after " +
                                   std::to_string(attempts) + " attempt(s): " + last_issue);
}

}  // namespace placer
