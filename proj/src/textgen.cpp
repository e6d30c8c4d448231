#include "cclab/textgen.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "cclab/rng.hpp"

namespace cclab {

namespace {

const std::array<const char*, 24> kOnsets = {"b",  "br", "c",  "ch", "d",  "dr", "f",  "g",
                                             "gr", "h",  "j",  "k",  "l",  "m",  "n",  "p",
                                             "pr", "r",  "s",  "st", "t",  "tr", "v",  "w"};
const std::array<const char*, 10> kNuclei = {"a", "e", "i", "o", "u", "ai", "ea", "ie", "ou", "oo"};
const std::array<const char*, 12> kCodas = {"", "n", "r", "s", "t", "l", "m", "nd", "st", "rn", "ck", ""};

std::string make_word(Rng& rng, int syllables) {
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += kOnsets[rng.uniform_int(static_cast<int>(kOnsets.size()))];
    w += kNuclei[rng.uniform_int(static_cast<int>(kNuclei.size()))];
    if (s + 1 == syllables || rng.uniform() < 0.3) {
      w += kCodas[rng.uniform_int(static_cast<int>(kCodas.size()))];
    }
  }
  return w;
}

// Zipf-ish sampler over [0, n) with cumulative weights 1/(i+2)^0.85.
class ZipfSampler {
 public:
  explicit ZipfSampler(int n) : cum_(static_cast<std::size_t>(n)) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      total += 1.0 / std::pow(i + 2.0, 0.85);
      cum_[static_cast<std::size_t>(i)] = total;
    }
    for (auto& v : cum_) {
      v /= total;
    }
  }
  int sample(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
    if (it == cum_.end()) {
      return static_cast<int>(cum_.size()) - 1;
    }
    return static_cast<int>(it - cum_.begin());
  }

 private:
  std::vector<double> cum_;
};

}  // namespace

std::vector<std::string> generate_documents(const TextGenConfig& cfg) {
  Rng rng(cfg.seed);

  std::vector<std::string> words(static_cast<std::size_t>(cfg.vocab_words));
  for (int i = 0; i < cfg.vocab_words; ++i) {
    const int syl = i < cfg.function_words ? 1 : 2 + rng.uniform_int(2);
    words[static_cast<std::size_t>(i)] = make_word(rng, syl);
  }

  // Topic vocabularies: contiguous slices of the content range, overlapping a
  // little so topics share some vocabulary.
  std::vector<std::vector<int>> topics(static_cast<std::size_t>(cfg.n_topics));
  const int content_lo = cfg.function_words;
  const int content_n = cfg.vocab_words - content_lo;
  for (int t = 0; t < cfg.n_topics; ++t) {
    auto& tv = topics[static_cast<std::size_t>(t)];
    tv.reserve(static_cast<std::size_t>(cfg.topic_words));
    const int start = content_lo + rng.uniform_int(std::max(1, content_n - cfg.topic_words));
    for (int i = 0; i < cfg.topic_words; ++i) {
      tv.push_back(start + i);
    }
    rng.shuffle(tv);
  }

  ZipfSampler func_sampler(cfg.function_words);
  ZipfSampler topic_sampler(cfg.topic_words);
  ZipfSampler global_sampler(content_n);

  std::vector<std::string> docs;
  std::size_t written = 0;
  while (written < cfg.target_chars) {
    const auto& topic = topics[static_cast<std::size_t>(rng.uniform_int(cfg.n_topics))];

    // Document-local entities: fresh proper names reused throughout the doc.
    const int n_entities = 3 + rng.uniform_int(4);
    std::vector<std::string> entities;
    for (int e = 0; e < n_entities; ++e) {
      std::string name = make_word(rng, 2 + rng.uniform_int(2));
      name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
      entities.push_back(std::move(name));
    }

    std::string doc;
    const int n_paragraphs = 2 + rng.uniform_int(5);
    for (int p = 0; p < n_paragraphs; ++p) {
      const int n_sentences = 3 + rng.uniform_int(6);
      for (int s = 0; s < n_sentences; ++s) {
        const int n_words = 6 + rng.uniform_int(11);
        std::string sentence;
        for (int wi = 0; wi < n_words; ++wi) {
          std::string word;
          const double r = rng.uniform();
          if (r < 0.40) {
            word = words[static_cast<std::size_t>(func_sampler.sample(rng))];
          } else if (r < 0.80) {
            word = words[static_cast<std::size_t>(topic[static_cast<std::size_t>(
                topic_sampler.sample(rng))])];
          } else if (r < 0.92) {
            word = entities[static_cast<std::size_t>(rng.uniform_int(n_entities))];
          } else {
            word = words[static_cast<std::size_t>(content_lo + global_sampler.sample(rng))];
          }
          if (wi == 0 && std::islower(static_cast<unsigned char>(word[0]))) {
            word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
          }
          if (!sentence.empty()) {
            sentence += ' ';
          }
          sentence += word;
          if (wi > 1 && wi + 2 < n_words && rng.uniform() < 0.08) {
            sentence += ',';
          }
        }
        sentence += '.';
        if (!doc.empty() && doc.back() != '\n') {
          doc += ' ';
        }
        doc += sentence;
      }
      doc += "\n\n";
    }
    written += doc.size();
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace cclab
