// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/newsrec.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <new>
#include <sstream>
#include <streambuf>
#include <string>
#include <vector>

#include "newsrec/error.hpp"
#include "newsrec/eval.hpp"
#include "newsrec/pipeline.hpp"

struct nr_session {
  nr_log_fn log = nullptr;
  void* user = nullptr;
  std::string last_error;
};

struct nr_config {
  newsrec::RunConfig config;
};

struct nr_model {
  newsrec::RecModel model;
};

namespace {

thread_local std::string g_last_error;

nr_status status_of(newsrec::ErrorKind kind) {
  using newsrec::ErrorKind;
  switch (kind) {
    case ErrorKind::kConfig: return NR_ERR_CONFIG;
    case ErrorKind::kData: return NR_ERR_DATA;
    case ErrorKind::kNumerical: return NR_ERR_NUMERICAL;
    case ErrorKind::kDimension: return NR_ERR_DIMENSION;
    case ErrorKind::kIndex: return NR_ERR_INDEX;
    case ErrorKind::kContract: return NR_ERR_CONTRACT;
    case ErrorKind::kIo: return NR_ERR_IO;
  }
  return NR_ERR_INTERNAL;
}

template <class F>
nr_status guarded(std::string& error_slot, F&& f) {
  try {
    f();
    return NR_OK;
  } catch (const newsrec::Error& e) {
    error_slot = e.what();
    return status_of(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    error_slot = e.what();
    return NR_ERR_IO;
  } catch (const std::bad_alloc&) {
    error_slot = "out of memory";
    return NR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    error_slot = e.what();
    return NR_ERR_INTERNAL;
  } catch (...) {
    error_slot = "unknown error";
    return NR_ERR_INTERNAL;
  }
}

template <class F>
nr_status guarded(F&& f) {
  return guarded(g_last_error, std::forward<F>(f));
}

nr_status bad_argument(std::string& slot, const char* what) {
  slot = what;
  return NR_ERR_ARGUMENT;
}

// Line-buffered stream forwarding to the session's log callback.
class LogBuf : public std::streambuf {
 public:
  explicit LogBuf(const nr_session* s) : s_(s) {}
  ~LogBuf() override { flush_line(); }

 protected:
  int overflow(int ch) override {
    if (ch == traits_type::eof()) return 0;
    line_.push_back(static_cast<char>(ch));
    if (ch == '\n') flush_line();
    return ch;
  }
  int sync() override {
    flush_line();
    return 0;
  }

 private:
  void flush_line() {
    if (line_.empty()) return;
    if (s_->log) {
      s_->log(line_.c_str(), s_->user);
    } else {
      std::fputs(line_.c_str(), stdout);
      std::fflush(stdout);
    }
    line_.clear();
  }
  const nr_session* s_;
  std::string line_;
};

template <class F>
nr_status run_command(nr_session* session, const nr_config* config, const char* out_dir, F&& f) {
  if (!session) return bad_argument(g_last_error, "session is null");
  if (!config || !out_dir) return bad_argument(session->last_error, "config and out_dir are required");
  return guarded(session->last_error, [&] {
    LogBuf buf(session);
    std::ostream log(&buf);
    f(log);
    log.flush();
  });
}

std::vector<int> labels_of(const int32_t* labels, size_t n) {
  return std::vector<int>(labels, labels + n);
}

}  // namespace

extern "C" {

const char* nr_version(void) { return "1.0.0"; }

const char* nr_status_name(nr_status status) {
  switch (status) {
    case NR_OK: return "ok";
    case NR_ERR_INTERNAL: return "internal error";
    case NR_ERR_CONFIG: return "config error";
    case NR_ERR_DATA: return "data error";
    case NR_ERR_NUMERICAL: return "numerical error";
    case NR_ERR_DIMENSION: return "dimension error";
    case NR_ERR_INDEX: return "index error";
    case NR_ERR_CONTRACT: return "contract violation";
    case NR_ERR_IO: return "i/o error";
    case NR_ERR_ARGUMENT: return "invalid argument";
  }
  return "unknown status";
}

const char* nr_last_error(void) { return g_last_error.c_str(); }

nr_status nr_session_create(nr_session** out) {
  if (!out) return bad_argument(g_last_error, "out is null");
  return guarded([&] { *out = new nr_session(); });
}

void nr_session_free(nr_session* session) { delete session; }

nr_status nr_session_set_log(nr_session* session, nr_log_fn fn, void* user) {
  if (!session) return bad_argument(g_last_error, "session is null");
  session->log = fn;
  session->user = user;
  return NR_OK;
}

const char* nr_session_last_error(const nr_session* session) {
  return session ? session->last_error.c_str() : "session is null";
}

nr_status nr_config_load(const char* path, nr_config** out) {
  if (!path || !out) return bad_argument(g_last_error, "path and out are required");
  return guarded([&] { *out = new nr_config{newsrec::RunConfig::load(path)}; });
}

nr_status nr_config_parse(const char* json, nr_config** out) {
  if (!json || !out) return bad_argument(g_last_error, "json and out are required");
  return guarded([&] { *out = new nr_config{newsrec::RunConfig::parse(json)}; });
}

void nr_config_free(nr_config* config) { delete config; }

nr_status nr_config_set_seed(nr_config* config, uint64_t seed) {
  if (!config) return bad_argument(g_last_error, "config is null");
  return guarded([&] { config->config = config->config.with_seed(seed); });
}

nr_status nr_config_seed(const nr_config* config, uint64_t* out) {
  if (!config || !out) return bad_argument(g_last_error, "config and out are required");
  *out = config->config.seed;
  return NR_OK;
}

nr_status nr_config_hash(const nr_config* config, char* buf, size_t size) {
  if (!config || !buf) return bad_argument(g_last_error, "config and buf are required");
  if (size < 17) return bad_argument(g_last_error, "hash buffer needs 17 bytes");
  return guarded([&] {
    const std::string h = config->config.hash();
    std::memcpy(buf, h.c_str(), h.size() + 1);
  });
}

nr_status nr_cmd_gen_data(nr_session* session, const nr_config* config, const char* out_dir) {
  return run_command(session, config, out_dir,
                     [&](std::ostream& log) { newsrec::cmd_gen_data(config->config, out_dir, log); });
}

nr_status nr_cmd_pretrain(nr_session* session, const nr_config* config, const char* out_dir) {
  return run_command(session, config, out_dir,
                     [&](std::ostream& log) { newsrec::cmd_pretrain(config->config, out_dir, log); });
}

nr_status nr_cmd_train(nr_session* session, const nr_config* config, const char* out_dir,
                       const char* pretrained_dir, int scratch) {
  return run_command(session, config, out_dir, [&](std::ostream& log) {
    newsrec::TrainOptions opt;
    if (pretrained_dir) opt.pretrained_dir = pretrained_dir;
    opt.force_scratch = scratch != 0;
    newsrec::cmd_train(config->config, out_dir, opt, log);
  });
}

nr_status nr_cmd_evaluate(nr_session* session, const nr_config* config, const char* out_dir,
                          const char* checkpoint_dir, int oracle_scorer) {
  return run_command(session, config, out_dir, [&](std::ostream& log) {
    newsrec::EvaluateOptions opt;
    if (checkpoint_dir) opt.checkpoint_dir = checkpoint_dir;
    opt.oracle_scorer = oracle_scorer != 0;
    newsrec::cmd_evaluate(config->config, out_dir, opt, log);
  });
}

nr_status nr_cmd_compare(nr_session* session, const nr_config* config, const char* out_dir) {
  return run_command(session, config, out_dir,
                     [&](std::ostream& log) { newsrec::cmd_compare(config->config, out_dir, log); });
}

nr_status nr_cmd_export_embeddings(nr_session* session, const nr_config* config, const char* out_dir,
                                   const char* checkpoint_dir) {
  return run_command(session, config, out_dir, [&](std::ostream& log) {
    newsrec::cmd_export_embeddings(config->config, out_dir, checkpoint_dir ? checkpoint_dir : "", log);
  });
}

nr_status nr_model_load(const char* dir, nr_model** out) {
  if (!dir || !out) return bad_argument(g_last_error, "dir and out are required");
  return guarded([&] { *out = new nr_model{newsrec::RecModel::load(dir)}; });
}

void nr_model_free(nr_model* model) { delete model; }

nr_status nr_model_param_count(const nr_model* model, size_t* out) {
  if (!model || !out) return bad_argument(g_last_error, "model and out are required");
  *out = model->model.params().element_count();
  return NR_OK;
}

nr_status nr_model_embedding_dim(const nr_model* model, size_t* out) {
  if (!model || !out) return bad_argument(g_last_error, "model and out are required");
  *out = model->model.spec().news.d_model;
  return NR_OK;
}

nr_status nr_model_encode_titles(const nr_model* model, const int32_t* ids, const size_t* lengths,
                                 size_t count, double* out) {
  if (!model || (count && (!ids || !lengths || !out))) {
    return bad_argument(g_last_error, "model, ids, lengths and out are required");
  }
  return guarded([&] {
    const auto& spec = model->model.spec();
    std::vector<newsrec::TokenSequence> seqs(count);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < count; ++i) {
      if (lengths[i] == 0 || lengths[i] > spec.max_title_len) {
        throw newsrec::DimensionError("title " + std::to_string(i) + " must hold 1.." +
                                      std::to_string(spec.max_title_len) + " ids");
      }
      auto& s = seqs[i];
      s.ids.assign(spec.max_title_len, newsrec::kPadId);
      s.mask.assign(spec.max_title_len, 0);
      s.original_length = lengths[i];
      for (std::size_t t = 0; t < lengths[i]; ++t, ++pos) {
        if (ids[pos] < 0 || static_cast<std::size_t>(ids[pos]) >= spec.vocab_size) {
          throw newsrec::IndexError("token id " + std::to_string(ids[pos]) + " outside the vocabulary");
        }
        s.ids[t] = ids[pos];
        s.mask[t] = 1;
      }
    }
    const newsrec::Tensor emb = newsrec::encode_all_news(model->model, seqs);
    std::memcpy(out, emb.data(), emb.size() * sizeof(double));
  });
}

nr_status nr_metric_auc(const double* scores, const int32_t* labels, size_t n, double* out) {
  if (!scores || !labels || !out) return bad_argument(g_last_error, "null argument");
  return guarded([&] {
    const auto l = labels_of(labels, n);
    *out = newsrec::auc_impression({scores, n}, l);
  });
}

nr_status nr_metric_mrr(const double* scores, const int32_t* labels, size_t n, double* out) {
  if (!scores || !labels || !out) return bad_argument(g_last_error, "null argument");
  return guarded([&] {
    const auto l = labels_of(labels, n);
    *out = newsrec::mrr({scores, n}, l);
  });
}

nr_status nr_metric_ndcg(const double* scores, const int32_t* labels, size_t n, size_t k, double* out) {
  if (!scores || !labels || !out) return bad_argument(g_last_error, "null argument");
  return guarded([&] {
    const auto l = labels_of(labels, n);
    *out = newsrec::ndcg_at_k({scores, n}, l, k);
  });
}

}  // extern "C"
