"""Two-dimensional PCA of chord embeddings and neighbourhood analysis."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def jacobi_eigh(A, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvectors as columns).
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("jacobi_eigh needs a symmetric square matrix")
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = np.abs(A - np.diag(np.diag(A))).max() if n > 1 else 0.0
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


@dataclass
class Projection2D:
    labels: list[str]
    points: np.ndarray       # (N, 2)
    components: np.ndarray   # (2, D), orthonormal rows
    explained: np.ndarray    # fraction of total variance per component
    eigenvalues: np.ndarray  # all covariance eigenvalues, descending

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "x", "y"])
        for lab, (x, y) in zip(self.labels, self.points):
            w.writerow([lab, repr(float(x)), repr(float(y))])
        return buf.getvalue()


def pca_2d(vectors, labels: Sequence[str] | None = None) -> Projection2D:
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or len(X) < 3:
        raise ValueError("PCA needs at least 3 points")
    labels = list(labels) if labels is not None else [str(i) for i in range(len(X))]
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (len(X) - 1)
    w, V = jacobi_eigh(cov)
    w = np.maximum(w, 0.0)
    total = w.sum()
    if total <= 1e-300:
        raise ValueError("data has zero variance")
    comps = V[:, :2].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return Projection2D(labels, Xc @ comps.T, comps, w[:2] / total, w)


def nearest_neighbor_report(vectors, labels: Sequence[str]) -> dict[str, tuple[str, float]]:
    """For each label, the closest other point (Euclidean); ties go to the earlier label."""
    X = np.asarray(vectors, dtype=np.float64)
    if len(X) < 2:
        raise ValueError("need at least 2 points")
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(D, np.inf)
    out = {}
    for i, lab in enumerate(labels):
        j = int(np.argmin(D[i]))
        out[lab] = (labels[j], float(D[i, j]))
    return out


def cyclic_order(points) -> list[int]:
    """Point indices sorted by polar angle around the centroid."""
    P = np.asarray(points, dtype=np.float64)
    d = P - P.mean(axis=0)
    return list(np.argsort(np.arctan2(d[:, 1], d[:, 0]), kind="stable"))


def same_cycle(order: Sequence, reference: Sequence) -> bool:
    """True when ``order`` is ``reference`` up to rotation and reflection."""
    order, reference = list(order), list(reference)
    if sorted(order) != sorted(reference):
        return False
    n = len(reference)
    for seq in (order, order[::-1]):
        k = seq.index(reference[0])
        if seq[k:] + seq[:k] == reference:
            return True
    return n == 0


def circle_neighbor_hits(vectors, circle_labels: Sequence[str]) -> int:
    """How many points have one of their two circle neighbours as nearest embedding."""
    labels = list(circle_labels)
    nn = nearest_neighbor_report(vectors, labels)
    n = len(labels)
    hits = 0
    for k, lab in enumerate(labels):
        if nn[lab][0] in (labels[(k - 1) % n], labels[(k + 1) % n]):
            hits += 1
    return hits
