#ifndef ALT_CHECKPOINT_HPP
#define ALT_CHECKPOINT_HPP

#include <string>

#include "alt/model.hpp"
#include "alt/train.hpp"

namespace alt {

// Checkpoint container ("ALTW"): magic, version u32=1, entry count u32;
// per entry: name length u16, UTF-8 name, rank u8, dims u32 each, 32-bit
// float data; then a length-prefixed UTF-8 JSON config echo. Parameters are
// stored in 32-bit regardless of the training precision. The frozen entity
// matrix rides along as the extra entry "text.entities".
template <class Real>
void save_checkpoint(const std::string& path, const AltModel<Real>& model,
                     const nlohmann::json& config_echo);

struct CheckpointInfo {
    nlohmann::json config_echo;
};

template <class Real>
CheckpointInfo load_checkpoint(const std::string& path, AltModel<Real>& model_out);

// just the echo, without materializing a model
nlohmann::json read_checkpoint_echo(const std::string& path);

}  // namespace alt

#endif
