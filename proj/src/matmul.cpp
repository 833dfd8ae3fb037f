#include "xmlp/matmul.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include "xmlp/threading.hpp"

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

namespace xmlp {

void set_compute_threads(int n) { ThreadPool::instance().set_threads(n); }
int compute_threads() { return ThreadPool::instance().threads(); }

namespace {

// Register block. NR is one or two SIMD vectors wide; MR rows of
// accumulators stay resident in registers across the k-loop.
#if defined(__AVX512F__)
constexpr int MR = 12;
constexpr int NR = 32;  // 2 zmm
#elif defined(__AVX2__)
constexpr int MR = 6;
constexpr int NR = 16;  // 2 ymm
#else
constexpr int MR = 4;
constexpr int NR = 8;
#endif

// Cache blocking: the packed A block (MC x KC) targets L2, the packed B
// block (KC x NC) targets L3.
constexpr int MC = 96;
constexpr int KC = 256;
constexpr int NC = 2048;

inline float read_src(const float* p, int ld, bool trans, int row, int col) {
  return trans ? p[static_cast<size_t>(col) * ld + row]
               : p[static_cast<size_t>(row) * ld + col];
}

// Packs rows [i0, i0+mb) x cols [k0, k0+kb) of op(A) into MR-row panels,
// k-major within a panel, zero-padded to a multiple of MR rows.
void pack_a(const float* a, int lda, bool trans, int i0, int mb, int k0,
            int kb, float* dst) {
  for (int ir = 0; ir < mb; ir += MR) {
    const int rows = std::min(MR, mb - ir);
    float* panel = dst + static_cast<size_t>(ir) * kb;
    if (!trans && rows == MR) {
      for (int kk = 0; kk < kb; ++kk)
        for (int r = 0; r < MR; ++r)
          panel[kk * MR + r] = a[static_cast<size_t>(i0 + ir + r) * lda + k0 + kk];
    } else {
      for (int kk = 0; kk < kb; ++kk) {
        for (int r = 0; r < rows; ++r)
          panel[kk * MR + r] = read_src(a, lda, trans, i0 + ir + r, k0 + kk);
        for (int r = rows; r < MR; ++r) panel[kk * MR + r] = 0.0f;
      }
    }
  }
}

// Packs rows [k0, k0+kb) x cols [j0, j0+nb) of op(B) into NR-col panels,
// k-major within a panel, zero-padded to a multiple of NR cols.
void pack_b(const float* b, int ldb, bool trans, int k0, int kb, int j0,
            int nb, float* dst) {
  for (int jr = 0; jr < nb; jr += NR) {
    const int cols = std::min(NR, nb - jr);
    float* panel = dst + static_cast<size_t>(jr) * kb;
    if (!trans && cols == NR) {
      for (int kk = 0; kk < kb; ++kk)
        std::memcpy(panel + kk * NR,
                    b + static_cast<size_t>(k0 + kk) * ldb + j0 + jr,
                    NR * sizeof(float));
    } else {
      for (int kk = 0; kk < kb; ++kk) {
        for (int jj = 0; jj < cols; ++jj)
          panel[kk * NR + jj] = read_src(b, ldb, trans, k0 + kk, j0 + jr + jj);
        for (int jj = cols; jj < NR; ++jj) panel[kk * NR + jj] = 0.0f;
      }
    }
  }
}

#if defined(__AVX512F__)

// 12x32 micro-kernel: 24 zmm accumulators.
void micro_kernel(int kb, const float* ap, const float* bp, float* c, int ldc,
                  int rows, int cols, bool overwrite) {
  __m512 acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = _mm512_setzero_ps();
    acc[r][1] = _mm512_setzero_ps();
  }
  for (int kk = 0; kk < kb; ++kk) {
    const __m512 b0 = _mm512_loadu_ps(bp + kk * NR);
    const __m512 b1 = _mm512_loadu_ps(bp + kk * NR + 16);
    const float* arow = ap + kk * MR;
    for (int r = 0; r < MR; ++r) {
      const __m512 av = _mm512_set1_ps(arow[r]);
      acc[r][0] = _mm512_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_ps(av, b1, acc[r][1]);
    }
  }
  if (rows == MR && cols == NR) {
    for (int r = 0; r < MR; ++r) {
      float* crow = c + static_cast<size_t>(r) * ldc;
      if (overwrite) {
        _mm512_storeu_ps(crow, acc[r][0]);
        _mm512_storeu_ps(crow + 16, acc[r][1]);
      } else {
        _mm512_storeu_ps(crow, _mm512_add_ps(_mm512_loadu_ps(crow), acc[r][0]));
        _mm512_storeu_ps(crow + 16,
                         _mm512_add_ps(_mm512_loadu_ps(crow + 16), acc[r][1]));
      }
    }
  } else {
    alignas(64) float tile[MR * NR];
    for (int r = 0; r < MR; ++r) {
      _mm512_store_ps(tile + r * NR, acc[r][0]);
      _mm512_store_ps(tile + r * NR + 16, acc[r][1]);
    }
    for (int r = 0; r < rows; ++r) {
      float* crow = c + static_cast<size_t>(r) * ldc;
      if (overwrite)
        for (int j = 0; j < cols; ++j) crow[j] = tile[r * NR + j];
      else
        for (int j = 0; j < cols; ++j) crow[j] += tile[r * NR + j];
    }
  }
}

#elif defined(__AVX2__)

// 6x16 micro-kernel: 12 ymm accumulators.
void micro_kernel(int kb, const float* ap, const float* bp, float* c, int ldc,
                  int rows, int cols, bool overwrite) {
  __m256 acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = _mm256_setzero_ps();
    acc[r][1] = _mm256_setzero_ps();
  }
  for (int kk = 0; kk < kb; ++kk) {
    const __m256 b0 = _mm256_loadu_ps(bp + kk * NR);
    const __m256 b1 = _mm256_loadu_ps(bp + kk * NR + 8);
    const float* arow = ap + kk * MR;
    for (int r = 0; r < MR; ++r) {
      const __m256 av = _mm256_set1_ps(arow[r]);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
  }
  if (rows == MR && cols == NR) {
    for (int r = 0; r < MR; ++r) {
      float* crow = c + static_cast<size_t>(r) * ldc;
      if (overwrite) {
        _mm256_storeu_ps(crow, acc[r][0]);
        _mm256_storeu_ps(crow + 8, acc[r][1]);
      } else {
        _mm256_storeu_ps(crow, _mm256_add_ps(_mm256_loadu_ps(crow), acc[r][0]));
        _mm256_storeu_ps(crow + 8,
                         _mm256_add_ps(_mm256_loadu_ps(crow + 8), acc[r][1]));
      }
    }
  } else {
    alignas(32) float tile[MR * NR];
    for (int r = 0; r < MR; ++r) {
      _mm256_store_ps(tile + r * NR, acc[r][0]);
      _mm256_store_ps(tile + r * NR + 8, acc[r][1]);
    }
    for (int r = 0; r < rows; ++r) {
      float* crow = c + static_cast<size_t>(r) * ldc;
      if (overwrite)
        for (int j = 0; j < cols; ++j) crow[j] = tile[r * NR + j];
      else
        for (int j = 0; j < cols; ++j) crow[j] += tile[r * NR + j];
    }
  }
}

#else

void micro_kernel(int kb, const float* ap, const float* bp, float* c, int ldc,
                  int rows, int cols, bool overwrite) {
  float tile[MR * NR];
  for (int i = 0; i < MR * NR; ++i) tile[i] = 0.0f;
  for (int kk = 0; kk < kb; ++kk) {
    const float* arow = ap + kk * MR;
    const float* brow = bp + kk * NR;
    for (int r = 0; r < MR; ++r)
      for (int j = 0; j < NR; ++j) tile[r * NR + j] += arow[r] * brow[j];
  }
  for (int r = 0; r < rows; ++r) {
    float* crow = c + static_cast<size_t>(r) * ldc;
    if (overwrite)
      for (int j = 0; j < cols; ++j) crow[j] = tile[r * NR + j];
    else
      for (int j = 0; j < cols; ++j) crow[j] += tile[r * NR + j];
  }
}

#endif

struct Workspace {
  std::vector<float> a_pack;
  std::vector<float> b_pack;
};

Workspace& local_workspace() {
  thread_local Workspace ws;
  return ws;
}

}  // namespace

void gemm_f32(bool trans_a, bool trans_b, int m, int n, int k, const float* a,
              int lda, const float* b, int ldb, float* c, int ldc,
              bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate)
      for (int i = 0; i < m; ++i)
        std::memset(c + static_cast<size_t>(i) * ldc, 0, sizeof(float) * n);
    return;
  }

  Workspace& ws = local_workspace();
  ws.b_pack.resize(static_cast<size_t>(KC) * std::min(n + NR, NC + NR));

  const int m_blocks = (m + MC - 1) / MC;
  const bool parallel = m_blocks > 1 && ThreadPool::instance().threads() > 1;

  for (int jc = 0; jc < n; jc += NC) {
    const int nb = std::min(NC, n - jc);
    for (int pc = 0; pc < k; pc += KC) {
      const int kb = std::min(KC, k - pc);
      pack_b(b, ldb, trans_b, pc, kb, jc, nb, ws.b_pack.data());
      const bool overwrite = (pc == 0) && !accumulate;
      const float* bpack = ws.b_pack.data();

      auto run_block = [&](int block) {
        const int ic = block * MC;
        const int mb = std::min(MC, m - ic);
        Workspace& lws = local_workspace();
        lws.a_pack.resize(static_cast<size_t>(kb) * (mb + MR));
        pack_a(a, lda, trans_a, ic, mb, pc, kb, lws.a_pack.data());
        for (int jr = 0; jr < nb; jr += NR) {
          const int cols = std::min(NR, nb - jr);
          const float* bpanel = bpack + static_cast<size_t>(jr) * kb;
          for (int ir = 0; ir < mb; ir += MR) {
            const int rows = std::min(MR, mb - ir);
            micro_kernel(kb, lws.a_pack.data() + static_cast<size_t>(ir) * kb,
                         bpanel,
                         c + static_cast<size_t>(ic + ir) * ldc + jc + jr, ldc,
                         rows, cols, overwrite);
          }
        }
      };

      if (parallel)
        ThreadPool::instance().parallel_for(m_blocks, run_block);
      else
        for (int blk = 0; blk < m_blocks; ++blk) run_block(blk);
    }
  }
}

}  // namespace xmlp
