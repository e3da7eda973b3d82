#include "m2rec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "m2rec/error.hpp"
#include "m2rec/log.hpp"

namespace m2rec {

ItemId Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  tokens_.push_back(token);
  const auto id = static_cast<ItemId>(tokens_.size());
  index_.emplace(token, id);
  return id;
}

std::optional<ItemId> Vocabulary::find(const std::string& token) const {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  return std::nullopt;
}

const std::string& Vocabulary::token(ItemId index) const {
  if (index < 1 || static_cast<std::size_t>(index) > tokens_.size())
    throw LookupError("vocabulary: index " + std::to_string(index) + " out of range");
  return tokens_[static_cast<std::size_t>(index) - 1];
}

DatasetStats InteractionDataset::stats() const {
  DatasetStats s;
  s.users = users.size();
  s.items = vocab.size();
  for (const auto& u : users) s.interactions += u.items.size();
  return s;
}

void InteractionDataset::validate() const {
  const auto n = static_cast<ItemId>(vocab.size());
  for (const auto& u : users) {
    if (u.items.empty()) throw DatasetError("user " + u.user_id + " has no events");
    for (ItemId item : u.items) {
      if (item < 1 || item > n)
        throw DatasetError("user " + u.user_id + ": item index " + std::to_string(item) +
                           " outside [1, " + std::to_string(n) + "]");
    }
    if (!u.timestamps.empty()) {
      if (u.timestamps.size() != u.items.size())
        throw DatasetError("user " + u.user_id + ": timestamp count mismatch");
      if (!std::is_sorted(u.timestamps.begin(), u.timestamps.end()))
        throw DatasetError("user " + u.user_id + ": events are not time ordered");
    }
  }
}

namespace {

std::vector<std::string_view> split_row(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
  return fields;
}

std::int64_t parse_int(std::string_view text, std::size_t line, const char* what) {
  std::int64_t value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ParseError(std::string("malformed ") + what + " '" + std::string(text) + "'", line);
  return value;
}

struct RawEvent {
  std::uint32_t user;
  std::uint32_t item;
  std::int64_t timestamp;
};

}  // namespace

InteractionDataset ingest_tsv(std::istream& in, const IngestOptions& options) {
  if (options.separator.empty()) throw ParameterError("ingest: empty separator");
  const std::size_t needed =
      std::max({options.user_column, options.item_column, options.timestamp_column}) + 1;

  std::vector<std::string> user_tokens;
  std::vector<std::string> item_tokens;
  std::unordered_map<std::string, std::uint32_t> user_index;
  std::unordered_map<std::string, std::uint32_t> item_index;
  std::vector<RawEvent> events;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_row(line, options.separator);
    if (fields.size() < needed)
      throw ParseError("expected at least " + std::to_string(needed) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    const std::string user(fields[options.user_column]);
    const std::string item(fields[options.item_column]);
    if (user.empty() || item.empty()) throw ParseError("empty user or item token", line_no);
    const std::int64_t ts = parse_int(fields[options.timestamp_column], line_no, "timestamp");

    auto [uit, unew] = user_index.try_emplace(user, static_cast<std::uint32_t>(user_tokens.size()));
    if (unew) user_tokens.push_back(user);
    auto [iit, inew] = item_index.try_emplace(item, static_cast<std::uint32_t>(item_tokens.size()));
    if (inew) item_tokens.push_back(item);
    events.push_back({uit->second, iit->second, ts});
  }

  // Iterate the two thresholds to a fixed point.
  std::vector<std::size_t> user_count(user_tokens.size());
  std::vector<std::size_t> item_count(item_tokens.size());
  while (true) {
    std::fill(user_count.begin(), user_count.end(), 0);
    std::fill(item_count.begin(), item_count.end(), 0);
    for (const auto& e : events) {
      ++user_count[e.user];
      ++item_count[e.item];
    }
    const auto keep = [&](const RawEvent& e) {
      return user_count[e.user] >= options.min_user_len &&
             item_count[e.item] >= options.min_item_count;
    };
    const auto before = events.size();
    events.erase(std::remove_if(events.begin(), events.end(), [&](const RawEvent& e) { return !keep(e); }),
                 events.end());
    if (events.size() == before) break;
  }
  if (events.empty()) throw DatasetError("ingest: no interactions left after filtering");

  std::vector<std::vector<std::size_t>> per_user(user_tokens.size());
  for (std::size_t i = 0; i < events.size(); ++i) per_user[events[i].user].push_back(i);

  InteractionDataset data;
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    auto& idx = per_user[u];
    if (idx.empty()) continue;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return events[a].timestamp < events[b].timestamp;
    });
    UserSequence seq;
    seq.user_id = user_tokens[u];
    seq.items.reserve(idx.size());
    seq.timestamps.reserve(idx.size());
    for (std::size_t i : idx) {
      seq.items.push_back(data.vocab.add(item_tokens[events[i].item]));
      seq.timestamps.push_back(events[i].timestamp);
    }
    data.users.push_back(std::move(seq));
  }
  data.validate();
  return data;
}

InteractionDataset ingest_tsv(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  return ingest_tsv(in, options);
}

void write_interactions_tsv(const InteractionDataset& data, std::ostream& out) {
  for (const auto& u : data.users) {
    for (std::size_t i = 0; i < u.items.size(); ++i) {
      const std::int64_t ts =
          u.timestamps.empty() ? static_cast<std::int64_t>(i) : u.timestamps[i];
      out << u.user_id << '\t' << data.vocab.token(u.items[i]) << '\t' << ts << '\n';
    }
  }
}

void save_canonical(const InteractionDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream vocab(dir / "vocab.txt");
    if (!vocab) throw DatasetError("cannot write " + (dir / "vocab.txt").string());
    for (const auto& token : data.vocab.tokens()) vocab << token << '\n';
  }
  std::ofstream seqs(dir / "sequences.tsv");
  if (!seqs) throw DatasetError("cannot write " + (dir / "sequences.tsv").string());
  for (const auto& u : data.users) {
    seqs << u.user_id << '\t';
    for (std::size_t i = 0; i < u.items.size(); ++i) seqs << (i ? " " : "") << u.items[i];
    seqs << '\t';
    for (std::size_t i = 0; i < u.timestamps.size(); ++i)
      seqs << (i ? " " : "") << u.timestamps[i];
    seqs << '\n';
  }
}

InteractionDataset load_canonical(const std::filesystem::path& dir) {
  InteractionDataset data;
  std::ifstream vocab(dir / "vocab.txt");
  if (!vocab) throw DatasetError("cannot open " + (dir / "vocab.txt").string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(vocab, line)) {
    ++line_no;
    if (line.empty()) throw ParseError("empty vocabulary token", line_no);
    if (data.vocab.find(line)) throw ParseError("duplicate vocabulary token " + line, line_no);
    data.vocab.add(line);
  }
  std::ifstream seqs(dir / "sequences.tsv");
  if (!seqs) throw DatasetError("cannot open " + (dir / "sequences.tsv").string());
  line_no = 0;
  while (std::getline(seqs, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_row(line, "\t");
    if (fields.size() < 2) throw ParseError("expected user and item columns", line_no);
    UserSequence seq;
    seq.user_id = std::string(fields[0]);
    for (auto tok : split_row(fields[1], " "))
      if (!tok.empty()) seq.items.push_back(static_cast<ItemId>(parse_int(tok, line_no, "item index")));
    if (fields.size() > 2) {
      for (auto tok : split_row(fields[2], " "))
        if (!tok.empty()) seq.timestamps.push_back(parse_int(tok, line_no, "timestamp"));
    }
    data.users.push_back(std::move(seq));
  }
  if (data.users.empty()) throw DatasetError("load_canonical: no users in " + dir.string());
  data.validate();
  return data;
}

std::size_t TrainingWindow::first_valid() const {
  std::size_t i = 0;
  while (i < input.size() && input[i] == kPaddingItem) ++i;
  return i;
}

Split::Split(std::shared_ptr<const InteractionDataset> data, std::size_t max_len)
    : data_(std::move(data)), max_len_(max_len) {
  if (!data_) throw ParameterError("make_windows: null dataset");
  if (max_len_ == 0) throw ParameterError("make_windows: max_len must be positive");
  for (std::size_t u = 0; u < data_->users.size(); ++u) {
    const auto n = data_->users[u].items.size();
    if (n < 3) {
      ++excluded_;
      continue;
    }
    const auto uid = static_cast<std::uint32_t>(u);
    for (std::size_t end = 1; end + 2 < n; ++end)
      train_.push_back({uid, static_cast<std::uint32_t>(end)});
    valid_.push_back({uid, static_cast<std::uint32_t>(n - 2)});
    test_.push_back({uid, static_cast<std::uint32_t>(n - 1)});
  }
  if (excluded_ > 0) log::info("make_windows: excluded ", excluded_, " users shorter than 3 events");
}

void Split::fill_input(const WindowRef& ref, ItemId* out) const {
  const auto& items = data_->users.at(ref.user).items;
  const std::size_t end = ref.end;
  const std::size_t take = std::min(end, max_len_);
  const std::size_t pad = max_len_ - take;
  std::fill(out, out + pad, kPaddingItem);
  std::copy(items.begin() + static_cast<std::ptrdiff_t>(end - take),
            items.begin() + static_cast<std::ptrdiff_t>(end), out + pad);
}

TrainingWindow Split::window(const WindowRef& ref) const {
  TrainingWindow w;
  w.input.resize(max_len_);
  fill_input(ref, w.input.data());
  w.target = data_->users.at(ref.user).items.at(ref.end);
  w.user = ref.user;
  w.history = ref.end;
  return w;
}

Split make_windows(std::shared_ptr<const InteractionDataset> data, std::size_t max_len) {
  return Split(std::move(data), max_len);
}

ItemId synthetic_item(const std::vector<std::size_t>& periods, std::int64_t t) {
  std::int64_t code = 0;
  for (std::size_t p : periods) {
    const auto period = static_cast<std::int64_t>(p);
    code = code * period + ((t % period) + period) % period;
  }
  return static_cast<ItemId>(code + 1);
}

InteractionDataset generate_synthetic(const SyntheticOptions& o) {
  if (o.periods.empty()) throw ParameterError("synthetic: periods must be non-empty");
  if (!(o.noise_prob >= 0.0 && o.noise_prob < 1.0))
    throw ParameterError("synthetic: noise probability must lie in [0, 1)");
  if (o.num_users == 0 || o.length == 0) throw ParameterError("synthetic: empty dataset requested");
  std::size_t product = 1;
  for (std::size_t p : o.periods) {
    if (p == 0) throw ParameterError("synthetic: periods must be positive");
    product *= p;
    if (product > o.num_items)
      throw ParameterError("synthetic: product of periods exceeds the item count");
  }

  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<std::int64_t> phase(0, static_cast<std::int64_t>(product) - 1);
  std::uniform_int_distribution<ItemId> random_item(1, static_cast<ItemId>(o.num_items));
  std::bernoulli_distribution corrupt(o.noise_prob);

  InteractionDataset data;
  for (std::size_t i = 1; i <= o.num_items; ++i) data.vocab.add(std::to_string(i));
  data.users.reserve(o.num_users);
  for (std::size_t u = 0; u < o.num_users; ++u) {
    UserSequence seq;
    seq.user_id = "u" + std::to_string(u + 1);
    const std::int64_t start = o.random_phase ? phase(rng) : 0;
    seq.items.reserve(o.length);
    seq.timestamps.reserve(o.length);
    for (std::size_t s = 0; s < o.length; ++s) {
      const std::int64_t t = start + static_cast<std::int64_t>(s);
      ItemId item = synthetic_item(o.periods, t);
      if (o.noise_prob > 0.0 && corrupt(rng)) item = random_item(rng);
      seq.items.push_back(item);
      seq.timestamps.push_back(t * 3600);
    }
    data.users.push_back(std::move(seq));
  }
  return data;
}

Matrix inject_gaussian_noise(const Matrix& m, double level, std::uint64_t seed) {
  if (!(level >= 0.0)) throw ParameterError("noise level must be non-negative");
  if (level == 0.0 || m.size() == 0) return m;
  const double mean = m.mean();
  const double var = (m.array() - mean).square().sum() / static_cast<double>(m.size());
  const double sigma = level * std::sqrt(var);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += sigma * noise(rng);
  return out;
}

}  // namespace m2rec
