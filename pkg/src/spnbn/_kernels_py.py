"""Pure numpy fallback for the compiled batch evaluator."""
import numpy as np

CHUNK = 8192


def eval_batch(kind, ptr, child, weight, slot, dptr, dprob, lam):
    lam = np.asarray(lam, dtype=np.float64)
    rows = lam.shape[0]
    out = np.empty(rows, dtype=np.float64)
    m = len(kind)
    for start in range(0, rows, CHUNK):
        block = lam[start:start + CHUNK]
        val = [None] * m
        for i in range(m):
            k = kind[i]
            if k == 0:
                val[i] = block[:, slot[i]]
            elif k == 1:
                p = dprob[dptr[i]:dptr[i + 1]]
                val[i] = block[:, slot[i]:slot[i] + len(p)] @ p
            elif k == 2:
                acc = np.zeros(len(block))
                for j in range(ptr[i], ptr[i + 1]):
                    acc += weight[j] * val[child[j]]
                val[i] = acc
            else:
                acc = np.ones(len(block))
                for j in range(ptr[i], ptr[i + 1]):
                    acc = acc * val[child[j]]
                val[i] = acc
        out[start:start + CHUNK] = val[m - 1]
    return out
