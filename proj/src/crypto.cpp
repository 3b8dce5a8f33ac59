// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#include "rowshare/crypto.hpp"

#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>

#include <cstring>
#include <memory>

namespace rowshare::crypto {

namespace {

struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct PkeyCtxDeleter {
  void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};

using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

[[noreturn]] void throw_openssl(const char* what) {
  ERR_clear_error();
  throw EnvironmentError(std::string("openssl failure in ") + what);
}

PkeyPtr raw_private_key(int type, std::span<const std::uint8_t> priv) {
  EVP_PKEY* k = EVP_PKEY_new_raw_private_key(type, nullptr, priv.data(), priv.size());
  if (!k) throw_openssl("new_raw_private_key");
  return PkeyPtr(k);
}

PkeyPtr raw_public_key(int type, std::span<const std::uint8_t> pub) {
  EVP_PKEY* k = EVP_PKEY_new_raw_public_key(type, nullptr, pub.data(), pub.size());
  if (!k) {
    ERR_clear_error();
    throw InputError("malformed public key");
  }
  return PkeyPtr(k);
}

KeyPair generate_raw_keypair(int type) {
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new_id(type, nullptr));
  if (!ctx || EVP_PKEY_keygen_init(ctx.get()) <= 0) throw_openssl("keygen_init");
  EVP_PKEY* raw = nullptr;
  if (EVP_PKEY_keygen(ctx.get(), &raw) <= 0) throw_openssl("keygen");
  PkeyPtr key(raw);
  KeyPair pair;
  std::size_t len = kPublicKeySize;
  if (EVP_PKEY_get_raw_public_key(key.get(), pair.public_part.data(), &len) <= 0 ||
      len != kPublicKeySize) {
    throw_openssl("get_raw_public_key");
  }
  len = kPrivateKeySize;
  if (EVP_PKEY_get_raw_private_key(key.get(), pair.private_part.data(), &len) <= 0 ||
      len != kPrivateKeySize) {
    throw_openssl("get_raw_private_key");
  }
  return pair;
}

// AES-128-GCM seal/open over contiguous buffers. `out` layout: body || tag.
void gcm_seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
              std::span<const std::uint8_t> plaintext, std::uint8_t* out,
              std::span<const std::uint8_t> aad = {}) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw_openssl("cipher_ctx_new");
  if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.data(), nonce.data()) != 1) {
    throw_openssl("encrypt_init");
  }
  int outl = 0;
  if (!aad.empty() &&
      EVP_EncryptUpdate(ctx.get(), nullptr, &outl, aad.data(),
                        static_cast<int>(aad.size())) != 1) {
    throw_openssl("encrypt_aad");
  }
  if (!plaintext.empty() &&
      EVP_EncryptUpdate(ctx.get(), out, &outl, plaintext.data(),
                        static_cast<int>(plaintext.size())) != 1) {
    throw_openssl("encrypt_update");
  }
  int finl = 0;
  if (EVP_EncryptFinal_ex(ctx.get(), out + outl, &finl) != 1) throw_openssl("encrypt_final");
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize,
                          out + plaintext.size()) != 1) {
    throw_openssl("get_tag");
  }
}

// Inverse of gcm_seal; `body` excludes the tag. Throws AuthenticityError on
// tag mismatch.
Bytes gcm_open(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
               std::span<const std::uint8_t> body, std::span<const std::uint8_t> tag,
               std::span<const std::uint8_t> aad = {}) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw_openssl("cipher_ctx_new");
  if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.data(), nonce.data()) != 1) {
    throw_openssl("decrypt_init");
  }
  Bytes plain(body.size());
  int outl = 0;
  if (!aad.empty() &&
      EVP_DecryptUpdate(ctx.get(), nullptr, &outl, aad.data(),
                        static_cast<int>(aad.size())) != 1) {
    throw_openssl("decrypt_aad");
  }
  if (!body.empty() &&
      EVP_DecryptUpdate(ctx.get(), plain.data(), &outl, body.data(),
                        static_cast<int>(body.size())) != 1) {
    throw_openssl("decrypt_update");
  }
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize,
                          const_cast<std::uint8_t*>(tag.data())) != 1) {
    throw_openssl("set_tag");
  }
  int finl = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), plain.data() + outl, &finl) != 1) {
    ERR_clear_error();
    throw AuthenticityError("authenticated decryption failed");
  }
  return plain;
}

}  // namespace

void random_bytes(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw EnvironmentError("randomness source unavailable");
  }
}

RowKey generate_row_key() {
  RowKey key;
  random_bytes(key.bytes);
  return key;
}

KeyPair generate_wrap_keypair() { return generate_raw_keypair(EVP_PKEY_X25519); }

KeyPair generate_sign_keypair() { return generate_raw_keypair(EVP_PKEY_ED25519); }

Ciphertext encrypt_row(std::span<const std::uint8_t> plaintext, const RowKey& key) {
  Ciphertext ct;
  ct.bytes.resize(kNonceSize + plaintext.size() + kTagSize);
  random_bytes(std::span(ct.bytes.data(), kNonceSize));
  gcm_seal(key.bytes, std::span(ct.bytes.data(), kNonceSize), plaintext,
           ct.bytes.data() + kNonceSize);
  return ct;
}

Bytes decrypt_row(const Ciphertext& cipher, const RowKey& key) {
  if (cipher.bytes.size() < kNonceSize + kTagSize) {
    throw InputError("ciphertext shorter than nonce and tag");
  }
  std::span<const std::uint8_t> all(cipher.bytes);
  return gcm_open(key.bytes, all.subspan(0, kNonceSize),
                  all.subspan(kNonceSize, all.size() - kNonceSize - kTagSize),
                  all.subspan(all.size() - kTagSize));
}

KeyWrapper::KeyWrapper(KeyPair self) : self_(self) {}

std::array<std::uint8_t, kRowKeySize> KeyWrapper::kek_for_peer(
    std::span<const std::uint8_t> peer_public) const {
  if (peer_public.size() != kPublicKeySize) {
    throw InputError("malformed public key");
  }
  std::array<std::uint8_t, kPublicKeySize> peer{};
  std::memcpy(peer.data(), peer_public.data(), kPublicKeySize);
  {
    std::lock_guard lock(mutex_);
    auto it = kek_cache_.find(peer);
    if (it != kek_cache_.end()) return it->second;
  }

  PkeyPtr self_key = raw_private_key(EVP_PKEY_X25519, self_.private_part);
  PkeyPtr peer_key = raw_public_key(EVP_PKEY_X25519, peer_public);
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new(self_key.get(), nullptr));
  if (!ctx || EVP_PKEY_derive_init(ctx.get()) <= 0 ||
      EVP_PKEY_derive_set_peer(ctx.get(), peer_key.get()) <= 0) {
    throw_openssl("derive_init");
  }
  std::array<std::uint8_t, 32> shared{};
  std::size_t slen = shared.size();
  if (EVP_PKEY_derive(ctx.get(), shared.data(), &slen) <= 0 || slen != shared.size()) {
    throw_openssl("derive");
  }

  // HKDF-SHA256(shared) -> 16-byte key-encryption key.
  PkeyCtxPtr kdf(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
  static constexpr char kInfo[] = "rowshare-key-wrap-v1";
  std::array<std::uint8_t, kRowKeySize> kek{};
  std::size_t keklen = kek.size();
  if (!kdf || EVP_PKEY_derive_init(kdf.get()) <= 0 ||
      EVP_PKEY_CTX_set_hkdf_md(kdf.get(), EVP_sha256()) <= 0 ||
      EVP_PKEY_CTX_set1_hkdf_key(kdf.get(), shared.data(), static_cast<int>(shared.size())) <= 0 ||
      EVP_PKEY_CTX_add1_hkdf_info(kdf.get(), reinterpret_cast<const unsigned char*>(kInfo),
                                  sizeof(kInfo) - 1) <= 0 ||
      EVP_PKEY_derive(kdf.get(), kek.data(), &keklen) <= 0 || keklen != kek.size()) {
    throw_openssl("hkdf");
  }

  std::lock_guard lock(mutex_);
  kek_cache_.emplace(peer, kek);
  return kek;
}

Bytes KeyWrapper::wrap(const RowKey& row_key,
                       std::span<const std::uint8_t> receiver_public) const {
  auto kek = kek_for_peer(receiver_public);
  Bytes out(kPublicKeySize + kNonceSize + kRowKeySize + kTagSize);
  std::memcpy(out.data(), self_.public_part.data(), kPublicKeySize);
  random_bytes(std::span(out.data() + kPublicKeySize, kNonceSize));
  // The embedded sender key rides as associated data. The agreement alone
  // does not authenticate it completely: the top bit of an X25519 public key
  // is ignored by the scalar multiplication, so without this a blob with
  // that bit flipped would still unwrap.
  gcm_seal(kek, std::span<const std::uint8_t>(out.data() + kPublicKeySize, kNonceSize),
           row_key.bytes, out.data() + kPublicKeySize + kNonceSize,
           std::span<const std::uint8_t>(out.data(), kPublicKeySize));
  return out;
}

RowKey KeyWrapper::unwrap(std::span<const std::uint8_t> wrapped) const {
  if (wrapped.size() != kPublicKeySize + kNonceSize + kRowKeySize + kTagSize) {
    throw InputError("malformed wrapped key");
  }
  auto kek = kek_for_peer(wrapped.subspan(0, kPublicKeySize));
  Bytes plain = gcm_open(kek, wrapped.subspan(kPublicKeySize, kNonceSize),
                         wrapped.subspan(kPublicKeySize + kNonceSize, kRowKeySize),
                         wrapped.subspan(wrapped.size() - kTagSize),
                         wrapped.subspan(0, kPublicKeySize));
  RowKey key;
  std::memcpy(key.bytes.data(), plain.data(), kRowKeySize);
  return key;
}

Signature sign_payload(std::span<const std::uint8_t> payload,
                       std::span<const std::uint8_t> signer_private) {
  if (signer_private.size() != kPrivateKeySize) {
    throw InputError("malformed private key");
  }
  PkeyPtr key = raw_private_key(EVP_PKEY_ED25519, signer_private);
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1) {
    throw_openssl("digest_sign_init");
  }
  Signature sig;
  std::size_t siglen = sig.bytes.size();
  if (EVP_DigestSign(ctx.get(), sig.bytes.data(), &siglen, payload.data(), payload.size()) != 1 ||
      siglen != sig.bytes.size()) {
    throw_openssl("digest_sign");
  }
  return sig;
}

bool verify_payload(std::span<const std::uint8_t> payload, const Signature& sig,
                    std::span<const std::uint8_t> signer_public) {
  if (signer_public.size() != kPublicKeySize) return false;
  EVP_PKEY* raw = EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, signer_public.data(),
                                              signer_public.size());
  if (!raw) {
    ERR_clear_error();
    return false;
  }
  PkeyPtr key(raw);
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1) {
    ERR_clear_error();
    return false;
  }
  int rc = EVP_DigestVerify(ctx.get(), sig.bytes.data(), sig.bytes.size(), payload.data(),
                            payload.size());
  if (rc != 1) ERR_clear_error();
  return rc == 1;
}

Bytes sha256(std::span<const std::uint8_t> data) {
  Bytes md(32);
  unsigned int mdlen = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &mdlen, EVP_sha256(), nullptr) != 1) {
    throw_openssl("digest");
  }
  return md;
}

std::string password_digest(std::string_view password) {
  std::array<std::uint8_t, 16> salt{};
  random_bytes(salt);
  std::array<std::uint8_t, 32> md{};
  unsigned int mdlen = 0;
  Bytes input(salt.begin(), salt.end());
  input.insert(input.end(), password.begin(), password.end());
  if (EVP_Digest(input.data(), input.size(), md.data(), &mdlen, EVP_sha256(), nullptr) != 1) {
    throw_openssl("digest");
  }
  return to_hex(salt) + ":" + to_hex(md);
}

bool password_matches(std::string_view password, std::string_view digest) {
  auto colon = digest.find(':');
  if (colon == std::string_view::npos) return false;
  Bytes salt, want;
  try {
    salt = from_hex(digest.substr(0, colon));
    want = from_hex(digest.substr(colon + 1));
  } catch (const InputError&) {
    return false;
  }
  std::array<std::uint8_t, 32> md{};
  unsigned int mdlen = 0;
  Bytes input = salt;
  input.insert(input.end(), password.begin(), password.end());
  if (EVP_Digest(input.data(), input.size(), md.data(), &mdlen, EVP_sha256(), nullptr) != 1) {
    return false;
  }
  if (want.size() != md.size()) return false;
  unsigned diff = 0;
  for (std::size_t i = 0; i < md.size(); ++i) diff |= static_cast<unsigned>(want[i] ^ md[i]);
  return diff == 0;
}

}  // namespace rowshare::crypto
