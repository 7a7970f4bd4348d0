# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled CBM trial kernel; same contract as :mod:`teleshare._mc_py`."""

OUT_COLUMNS = 6


def num_columns(int n, int p):
    return 1 + 2 * n + 5 * n * p


def run_trials(const double[:, ::1] u, int n, int p, int q, double eta, double f, double eps,
               int fallback_plus, const signed char[::1] dishonest, int strategy, int symbol_correct,
               signed char[:, ::1] out):
    cdef int N = n * p
    cdef int c_sign = 1
    cdef int c_sym = 1 + n
    cdef int c_loss = c_sym + N
    cdef int c_flip = c_loss + 2 * N
    cdef int c_fdet = c_flip + N
    cdef int c_adv = c_fdet + N
    cdef int fallback = 1 if fallback_plus else 2
    cdef double half = eps / 2.0
    cdef Py_ssize_t t, T = u.shape[0]
    cdef int j, k, idx, sign, parity, sym, s_sym, s_sign, outcome, variant, det, vminus, st
    cdef int votes_plus, votes_minus, known, psi_count, lossy, psi_fails
    cdef int lsym, lsign, so_pre, succ_pre
    cdef int n_fail, n_succ, n_psi, minus, logical, isym, true_code
    cdef double uf, ua
    cdef int kind_j, bsym_j, bsign_j
    # block results are folded into the level-2 tallies as soon as they are announced
    for t in range(T):
        so_pre = 0
        succ_pre = 0
        n_fail = 0
        n_succ = 0
        n_psi = 0
        minus = 0
        lsym = 1 if u[t, 0] >= 0.5 else 0
        lsign = 0
        for j in range(n):
            sign = 1 if u[t, c_sign + j] >= 0.5 else 0
            lsign ^= sign
            parity = 0
            votes_plus = 0
            votes_minus = 0
            known = 0
            psi_count = 0
            lossy = 0
            psi_fails = 0
            s_sym = 0
            s_sign = 0
            variant = 0 if q > 0 else fallback
            for k in range(p):
                idx = j * p + k
                if k < p - 1:
                    sym = 1 if u[t, c_sym + idx] >= 0.5 else 0
                    parity ^= sym
                else:
                    sym = parity ^ lsym
                if u[t, c_loss + 2 * idx] < eta or u[t, c_loss + 2 * idx + 1] < eta:
                    outcome = 3
                else:
                    s_sym = sym
                    s_sign = sign
                    uf = u[t, c_flip + idx]
                    if uf < half:
                        s_sign ^= 1
                    elif uf < eps:
                        s_sym ^= 1
                    if variant == 0:
                        det = s_sym == 1
                    elif variant == 1:
                        det = s_sign == 0
                    else:
                        det = s_sign == 1
                    if det:
                        outcome = 0
                    elif u[t, c_fdet + idx] < f:
                        outcome = 1
                    else:
                        outcome = 2
                if outcome >= 2:
                    lossy = 1
                    if variant == 0:
                        variant = fallback
                elif variant == 0:
                    known += 1
                    if outcome == 0:
                        psi_count += 1
                        if s_sign:
                            votes_minus += 1
                            variant = 2
                        else:
                            votes_plus += 1
                            variant = 1
                    else:
                        psi_fails += 1
                        if psi_fails >= q:
                            variant = fallback
                else:
                    vminus = variant == 2
                    if outcome == 0:
                        known += 1
                        psi_count += s_sym
                    else:
                        vminus = not vminus
                    if vminus:
                        votes_minus += 1
                    else:
                        votes_plus += 1
            bsym_j = 0
            bsign_j = 0
            if votes_plus + votes_minus == 0:
                kind_j = 2
            else:
                bsign_j = 1 if votes_minus > votes_plus else 0
                if not lossy and known == p:
                    kind_j = 0
                    bsym_j = psi_count & 1
                else:
                    kind_j = 1
            if kind_j == 1:
                so_pre += 1
            elif kind_j == 0:
                succ_pre += 1
            if dishonest[j]:
                st = strategy
                if st == 3:
                    ua = u[t, c_adv + j]
                    st = 0 if ua < 1.0 / 3.0 else (1 if ua < 2.0 / 3.0 else 2)
                if st == 2:
                    kind_j = 2
                elif st == 0:
                    bsign_j ^= 1
                elif kind_j == 0:
                    bsym_j ^= 1
            if kind_j == 2:
                n_fail += 1
            else:
                minus ^= bsign_j
                if kind_j == 0:
                    n_succ += 1
                    n_psi += bsym_j
        logical = 0
        isym = 0
        if n_fail > 0 or n_succ == 0:
            logical = 1
        elif symbol_correct:
            if 2 * n_psi == n_succ:
                logical = 2
            else:
                isym = 1 if 2 * n_psi > n_succ else 0
        elif 0 < n_psi < n_succ:
            logical = 2
        else:
            isym = 1 if n_psi else 0
        true_code = 2 * lsym + lsign
        out[t, 0] = logical
        out[t, 2] = so_pre
        out[t, 3] = succ_pre
        out[t, 4] = true_code
        if logical == 0:
            out[t, 5] = 2 * isym + minus
            out[t, 1] = 1 if 2 * isym + minus == true_code else 0
        else:
            out[t, 5] = -1
            out[t, 1] = 0
