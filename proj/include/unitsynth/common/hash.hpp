#pragma once

#include <string>
#include <string_view>

namespace unitsynth {

/// Name of the content hash recorded in manifests.
inline constexpr std::string_view kContentHashName = "sha256";

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Incremental SHA-256 for hashing files without loading them whole.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::string_view data);
    std::string hex_digest();

private:
    void* ctx_;
};

std::string sha256_file_hex(const std::string& path);

} // namespace unitsynth
