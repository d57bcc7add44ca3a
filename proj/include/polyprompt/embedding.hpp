#pragma once

#include <memory>
#include <string>
#include <vector>

#include "polyprompt/errors.hpp"
#include "polyprompt/http_backend.hpp"
#include "polyprompt/util.hpp"

namespace polyprompt {

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string id() const = 0;
};

// Deterministic test provider: hashes tokens into a fixed-dimension bag
// vector. Same text, same vector, no network. Distinct texts land on
// distinct directions with high probability, which is all the perspective
// metric needs.
class HashEmbedder : public EmbeddingProvider {
public:
    explicit HashEmbedder(std::size_t dim = 64) : dim_(dim) {}

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_one(t));
        return out;
    }

    std::string id() const override { return "hash-" + std::to_string(dim_); }

private:
    std::vector<double> embed_one(const std::string& text) const {
        std::vector<double> v(dim_, 0.0);
        std::string token;
        auto flush = [&] {
            if (token.empty()) return;
            std::uint64_t h = fnv1a64(to_lower(token));
            double sign = (h >> 32) & 1 ? 1.0 : -1.0;
            v[h % dim_] += sign;
            v[(h >> 17) % dim_] += 0.5 * ((h >> 33) & 1 ? 1.0 : -1.0);
            token.clear();
        };
        for (char c : text) {
            if (std::isalnum(static_cast<unsigned char>(c)))
                token += c;
            else
                flush();
        }
        flush();
        // Guarantee a nonzero vector even for empty or cancelling input.
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm == 0.0) v[fnv1a64(text) % dim_] = 1.0;
        return v;
    }

    std::size_t dim_;
};

// Caches per (provider id, text), so re-embedding the same choice texts
// across items and strategies costs one provider call.
class CachingEmbedder : public EmbeddingProvider {
public:
    explicit CachingEmbedder(std::shared_ptr<EmbeddingProvider> inner) : inner_(std::move(inner)) {}

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out(texts.size());
        std::vector<std::size_t> missing;
        {
            std::scoped_lock lock(mu_);
            for (std::size_t i = 0; i < texts.size(); ++i) {
                auto it = cache_.find(texts[i]);
                if (it != cache_.end())
                    out[i] = it->second;
                else
                    missing.push_back(i);
            }
        }
        if (!missing.empty()) {
            std::vector<std::string> batch;
            batch.reserve(missing.size());
            for (std::size_t i : missing) batch.push_back(texts[i]);
            provider_calls_.fetch_add(1);
            auto fresh = inner_->embed(batch);
            if (fresh.size() != batch.size())
                throw ProviderError("embedding provider returned " + std::to_string(fresh.size()) +
                                    " vectors for " + std::to_string(batch.size()) + " texts");
            std::scoped_lock lock(mu_);
            for (std::size_t j = 0; j < missing.size(); ++j) {
                cache_[batch[j]] = fresh[j];
                out[missing[j]] = std::move(fresh[j]);
            }
        }
        return out;
    }

    std::string id() const override { return inner_->id(); }
    int provider_calls() const { return provider_calls_.load(); }

private:
    std::shared_ptr<EmbeddingProvider> inner_;
    std::mutex mu_;
    std::map<std::string, std::vector<double>> cache_;
    std::atomic<int> provider_calls_{0};
};

// Remote provider speaking the common embeddings wire shape:
// POST /embeddings {model, input: [...]} -> {data: [{embedding: [...]}]}.
class HttpEmbedder : public EmbeddingProvider {
public:
    HttpEmbedder(Transport transport, std::string model_id, std::string api_key = "")
        : transport_(std::move(transport)),
          model_id_(std::move(model_id)),
          api_key_(std::move(api_key)) {}

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        json body{{"model", model_id_}, {"input", texts}};
        HttpResult res = transport_("/embeddings", body.dump(), api_key_);
        if (res.status != 200)
            throw ProviderError("embedding request failed (HTTP " + std::to_string(res.status) +
                                "): " + (res.error.empty() ? res.body : res.error));
        try {
            json doc = json::parse(res.body);
            std::vector<std::vector<double>> out;
            for (const auto& item : doc.at("data"))
                out.push_back(item.at("embedding").get<std::vector<double>>());
            return out;
        } catch (const json::exception& e) {
            throw ProviderError(std::string("malformed embedding response: ") + e.what());
        }
    }

    std::string id() const override { return "http-" + model_id_; }

private:
    Transport transport_;
    std::string model_id_;
    std::string api_key_;
};

}  // namespace polyprompt
