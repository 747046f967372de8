#ifndef TAGKIT_SERIALIZE_HPP
#define TAGKIT_SERIALIZE_HPP

// Binary parameter blobs: a magic string, a caller-defined JSON meta line,
// the named parameter arrays, and a trailing integrity digest. Shared by
// model checkpoints and the frozen reconstruction proxy.

#include <string>
#include <vector>

#include "tagkit/graph.hpp"

namespace tagkit {

// Writes every parameter of `params` (values only) plus `meta_json`.
void save_param_blob(const std::string& path, const std::string& meta_json,
                     const ParamSet& params);
// Same, flattening several sets into one file. Names must be unique across
// the sets (the model and critic prefix theirs, so they compose).
void save_param_blob(const std::string& path, const std::string& meta_json,
                     const std::vector<const ParamSet*>& sets);

// Fills `params` in place and returns the stored meta string. The blob must
// carry exactly the parameters `params` already declares, with matching
// sizes; a mismatch means the file belongs to a different architecture.
// Corruption, truncation, or a bad digest raise CheckpointError; an
// architecture mismatch raises ShapeError.
std::string load_param_blob(const std::string& path, ParamSet& params);
std::string load_param_blob(const std::string& path, const std::vector<ParamSet*>& sets);

// Reads only the meta string, so callers can construct the right model
// before loading the arrays.
std::string peek_param_blob_meta(const std::string& path);

}  // namespace tagkit

#endif
