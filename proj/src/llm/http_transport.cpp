#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "unitsynth/llm/provider.hpp"

namespace unitsynth::llm {

HttplibTransport::HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

HttpTransport::Response HttplibTransport::post(const std::string& url,
                                               const std::map<std::string, std::string>& headers,
                                               const std::string& body) {
    // split "scheme://host[:port]" from the path
    const auto scheme_end = url.find("://");
    const auto path_begin = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const auto origin = url.substr(0, path_begin);
    const auto path = path_begin == std::string::npos ? std::string("/") : url.substr(path_begin);

    httplib::Client client(origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers hdrs;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
        if (k == "Content-Type") {
            content_type = v;
        } else {
            hdrs.emplace(k, v);
        }
    }
    Response out;
    auto res = client.Post(path, hdrs, body, content_type);
    if (!res) {
        out.status = 0;
        out.error = httplib::to_string(res.error());
        return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
}

} // namespace unitsynth::llm
