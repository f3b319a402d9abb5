#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace rflow {

// Streaming SHA-256 (FIPS 180-4). Used for artifact and manifest hashing;
// hashes are the reproducibility fingerprint of a run.
class Sha256 {
  public:
    Sha256();
    void update(const void* data, std::size_t len);
    void update(const std::string& s) { update(s.data(), s.size()); }
    // Finishes the digest and returns lowercase hex. The object must not be
    // reused afterwards.
    std::string hex_digest();

  private:
    void process_block(const unsigned char* block);

    std::uint32_t state_[8];
    unsigned char buffer_[64];
    std::size_t buffer_len_ = 0;
    std::uint64_t total_len_ = 0;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file_hex(const std::string& path);

}  // namespace rflow
