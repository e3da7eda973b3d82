#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "m2rec/types.hpp"

namespace m2rec {

// Item tokens mapped to contiguous indices 1..size(); 0 is the padding item.
class Vocabulary {
 public:
  ItemId add(const std::string& token);
  std::optional<ItemId> find(const std::string& token) const;
  const std::string& token(ItemId index) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, ItemId> index_;
};

struct UserSequence {
  std::string user_id;
  std::vector<ItemId> items;
  std::vector<std::int64_t> timestamps;  // empty when the source had none

  bool operator==(const UserSequence&) const = default;
};

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
};

struct InteractionDataset {
  Vocabulary vocab;
  std::vector<UserSequence> users;

  DatasetStats stats() const;
  std::size_t num_items() const { return vocab.size(); }
  // Throws DatasetError when an index is out of range or a sequence is out of order.
  void validate() const;

  bool operator==(const InteractionDataset& other) const {
    return vocab == other.vocab && users == other.users;
  }
};

struct IngestOptions {
  std::size_t min_user_len = 5;
  std::size_t min_item_count = 5;
  std::string separator = "\t";
  std::size_t user_column = 0;
  std::size_t item_column = 1;
  std::size_t timestamp_column = 2;
};

// Reads `user<sep>item<sep>timestamp` rows, drops users and items below the
// thresholds until nothing changes, and orders each user's events by time
// (stable, so ties keep input order). Users are numbered by first
// appearance; items by first appearance when walking users in that order.
InteractionDataset ingest_tsv(const std::filesystem::path& path, const IngestOptions& options);
InteractionDataset ingest_tsv(std::istream& in, const IngestOptions& options);

// Emits the dataset in the ingest format (tab separated, one event per row).
// Events without timestamps get their position as timestamp.
void write_interactions_tsv(const InteractionDataset& data, std::ostream& out);

// Canonical dump: vocab.txt (line i holds the token of index i+1) and
// sequences.tsv (`user<TAB>space-separated indices<TAB>space-separated timestamps`).
void save_canonical(const InteractionDataset& data, const std::filesystem::path& dir);
InteractionDataset load_canonical(const std::filesystem::path& dir);

// One next-item example. Inputs are left-padded with 0 to max_len.
struct TrainingWindow {
  std::vector<ItemId> input;
  ItemId target = kPaddingItem;
  std::size_t user = 0;       // index into InteractionDataset::users
  std::size_t history = 0;    // events preceding the target, before truncation

  std::size_t first_valid() const;
};

// Compact reference: the target is users[user].items[end], the input the
// (at most max_len) events before it.
struct WindowRef {
  std::uint32_t user;
  std::uint32_t end;
};

// Leave-one-out split. Per user of length n >= 3: test targets item n-1,
// validation item n-2, training every earlier position >= 1.
class Split {
 public:
  Split(std::shared_ptr<const InteractionDataset> data, std::size_t max_len);

  const InteractionDataset& data() const { return *data_; }
  std::shared_ptr<const InteractionDataset> data_ptr() const { return data_; }
  std::size_t max_len() const { return max_len_; }
  std::size_t excluded_users() const { return excluded_; }

  const std::vector<WindowRef>& train() const { return train_; }
  const std::vector<WindowRef>& valid() const { return valid_; }
  const std::vector<WindowRef>& test() const { return test_; }

  TrainingWindow window(const WindowRef& ref) const;
  // Writes max_len items (left padding included) into out.
  void fill_input(const WindowRef& ref, ItemId* out) const;

 private:
  std::shared_ptr<const InteractionDataset> data_;
  std::size_t max_len_;
  std::size_t excluded_ = 0;
  std::vector<WindowRef> train_;
  std::vector<WindowRef> valid_;
  std::vector<WindowRef> test_;
};

Split make_windows(std::shared_ptr<const InteractionDataset> data, std::size_t max_len);

struct SyntheticOptions {
  std::size_t num_users = 200;
  std::size_t num_items = 64;
  std::size_t length = 120;
  std::vector<std::size_t> periods = {7};
  double noise_prob = 0.0;
  std::uint64_t seed = 1;
  // Start each user at a random absolute time so users sit at different phases.
  bool random_phase = true;
};

// Item at absolute step t is g(t mod P_1, ..., t mod P_m), a mixed-radix code
// with the first period most significant (g is injective on phase tuples).
// With probability noise_prob the item is replaced by a uniform random one.
InteractionDataset generate_synthetic(const SyntheticOptions& options);

// g for the options above; exposed for oracles. Returns a 1-based item index.
ItemId synthetic_item(const std::vector<std::size_t>& periods, std::int64_t t);

// Adds i.i.d. N(0, (level * std(m))^2) noise, std taken over all entries.
Matrix inject_gaussian_noise(const Matrix& m, double level, std::uint64_t seed);

}  // namespace m2rec
