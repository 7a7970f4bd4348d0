"""Pure-Python CBM trial kernel (fallback for the compiled ``_mc_kernel``).

Both implementations consume the same pre-drawn uniforms and must return
identical outputs.  Column layout of ``u`` for ``n`` blocks of ``p`` pairs
(``N = n*p``)::

    0                   logical symbol
    1 .. n              block signs
    next N              photon symbol bits (last pair of a block is fixed by parity)
    next 2N             photon losses (two photons per pair)
    next N              analyzer flips
    next N              failure-flag draws
    next n              adversary choices

Codes: symbol 0=phi 1=psi; sign 0=+ 1=-; variant 0=Bpsi 1=B+ 2=B-;
pair outcome 0=detected 1=failure 2=unflagged failure 3=loss;
block kind 0=success 1=sign-only 2=failure; logical 0=identified
1=failure 2=inconsistent.  Output columns: logical, correct, sign-only
blocks and success blocks (both before any
adversarial change), true label (2*symbol+sign), identified label or -1.
"""

import numpy as np

OUT_COLUMNS = 6


def num_columns(n, p):
    return 1 + 2 * n + 5 * n * p


def run_trials(u, n, p, q, eta, f, eps, fallback_plus, dishonest, strategy, symbol_correct, out):
    N = n * p
    c_sign = 1
    c_sym = 1 + n
    c_loss = c_sym + N
    c_flip = c_loss + 2 * N
    c_fdet = c_flip + N
    c_adv = c_fdet + N
    fallback = 1 if fallback_plus else 2
    half = eps / 2.0
    kinds = [0] * n
    bsyms = [0] * n
    bsigns = [0] * n
    for t in range(u.shape[0]):
        row = u[t]
        so_pre = succ_pre = 0
        lsym = 1 if row[0] >= 0.5 else 0
        lsign = 0
        for j in range(n):
            sign = 1 if row[c_sign + j] >= 0.5 else 0
            lsign ^= sign
            parity = 0
            votes_plus = votes_minus = 0
            known = psi_count = lossy = psi_fails = 0
            variant = 0 if q > 0 else fallback
            for k in range(p):
                idx = j * p + k
                if k < p - 1:
                    sym = 1 if row[c_sym + idx] >= 0.5 else 0
                    parity ^= sym
                else:
                    sym = parity ^ lsym
                # analyzer
                if row[c_loss + 2 * idx] < eta or row[c_loss + 2 * idx + 1] < eta:
                    outcome = 3
                else:
                    s_sym, s_sign = sym, sign
                    uf = row[c_flip + idx]
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
                    elif row[c_fdet + idx] < f:
                        outcome = 1
                    else:
                        outcome = 2
                # level-1 bookkeeping and policy
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
            if votes_plus + votes_minus == 0:
                kinds[j] = 2
            else:
                bsigns[j] = 1 if votes_minus > votes_plus else 0
                if not lossy and known == p:
                    kinds[j] = 0
                    bsyms[j] = psi_count & 1
                else:
                    kinds[j] = 1
            so_pre += kinds[j] == 1
            succ_pre += kinds[j] == 0
            # announcement
            if dishonest[j]:
                st = strategy
                if st == 3:
                    ua = row[c_adv + j]
                    st = 0 if ua < 1.0 / 3.0 else (1 if ua < 2.0 / 3.0 else 2)
                if st == 2:
                    kinds[j] = 2
                elif st == 0:
                    bsigns[j] ^= 1
                elif kinds[j] == 0:
                    bsyms[j] ^= 1
        # level 2
        n_fail = n_succ = n_psi = minus = 0
        for j in range(n):
            if kinds[j] == 2:
                n_fail += 1
            else:
                minus ^= bsigns[j]
                if kinds[j] == 0:
                    n_succ += 1
                    n_psi += bsyms[j]
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
