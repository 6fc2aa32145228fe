#pragma once

#include <stdexcept>
#include <string>

namespace uizoom {

// Every failure carries a stable dotted code (e.g. "io.image_not_found") so
// callers and the CLI can report it machine-readably.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

namespace errc {
inline constexpr const char* kEmptyLogprobs = "parsing.empty_logprobs";
inline constexpr const char* kNoCandidates = "gating.no_candidates";
inline constexpr const char* kDegenerateWindow = "crop.degenerate_window";
inline constexpr const char* kEmptyWindow = "imaging.empty_window";
inline constexpr const char* kImageNotFound = "io.image_not_found";
inline constexpr const char* kImageDecode = "io.image_decode";
inline constexpr const char* kDatasetUnreadable = "io.dataset_unreadable";
inline constexpr const char* kDatasetFormat = "data.bad_record";
inline constexpr const char* kGtOutOfBounds = "data.gt_out_of_bounds";
inline constexpr const char* kTransport = "backend.transport";
inline constexpr const char* kProtocol = "backend.protocol";
inline constexpr const char* kCapacity = "backend.capacity";
inline constexpr const char* kConfig = "config.invalid";
}  // namespace errc

}  // namespace uizoom
