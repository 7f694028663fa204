"""Brute-force per-pixel reference implementations.

Written straight from the metric definitions with plain Python loops and no
shared code with the package, so a disagreement points at one side or the other.
"""
import colorsys
import math


def _rnd(x):
    return int(math.floor(x + 0.5))


def _clamp(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


def pixel_rgb(y, u, v):
    r = y + 1.402 * (v - 128)
    g = y - 0.344136 * (u - 128) - 0.714136 * (v - 128)
    b = y + 1.772 * (u - 128)
    return tuple(_clamp(_rnd(c), 0, 255) for c in (r, g, b))


def frame_rgb(frame):
    """List of rows of (r, g, b) tuples; chroma looked up by integer scaling."""
    h, w = frame.height, frame.width
    ch, cw = frame.u.shape
    sy = 1 if ch == h else 2
    sx = 1 if cw == w else 2
    Y, U, V = frame.y.tolist(), frame.u.tolist(), frame.v.tolist()
    return [[pixel_rgb(Y[i][j], U[i // sy][j // sx], V[i // sy][j // sx]) for j in range(w)] for i in range(h)]


def pixel_hsv(rgb):
    h, s, v = colorsys.rgb_to_hsv(*(c / 255.0 for c in rgb))
    return h * 360.0, s, v


def sobel(gray):
    h, w = len(gray), len(gray[0])

    def px(i, j):
        return gray[_clamp(i, 0, h - 1)][_clamp(j, 0, w - 1)]

    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    ky = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
    out = []
    for i in range(h):
        row = []
        for j in range(w):
            gx = gy = 0
            for a in range(3):
                for b in range(3):
                    p = px(i + a - 1, j + b - 1)
                    gx += kx[a][b] * p
                    gy += ky[a][b] * p
            row.append(min(math.sqrt(gx * gx + gy * gy) / (4 * math.sqrt(2)), 255.0))
        out.append(row)
    return out


def blocks(n, grid):
    """(start, stop) ranges of `grid` blocks over n pixels; the last takes the remainder."""
    size = n // grid
    return [(k * size, n if k == grid - 1 else (k + 1) * size) for k in range(grid)]


def block_stats(prev, cur, grid=8):
    a, b = prev.y.tolist(), cur.y.tolist()
    h, w = len(a), len(a[0])
    dm = ds = 0.0
    cells = [(r, c) for r in blocks(h, grid) for c in blocks(w, grid)]
    for (r0, r1), (c0, c1) in cells:
        stats = []
        for img in (a, b):
            vals = [img[i][j] for i in range(r0, r1) for j in range(c0, c1)]
            mu = sum(vals) / len(vals)
            var = sum((x - mu) ** 2 for x in vals) / len(vals)
            stats.append((mu, math.sqrt(var)))
        dm += abs(stats[1][0] - stats[0][0])
        ds += abs(stats[1][1] - stats[0][1])
    return dm / len(cells) / 255.0, ds / len(cells) / 255.0


def trapezoid(n, grid):
    w = [0.0] * n
    for s, e in blocks(n, grid):
        size = e - s
        for k in range(size):
            u = (k + 0.5) / size
            w[s + k] = min(1.0, 4 * u, 4 * (1 - u))
    return w


def cumedge(prev, cur, grid=4, bins=16):
    total = 0.0
    ncell = 0
    mags = [sobel(prev.y.tolist()), sobel(cur.y.tolist())]
    h, w = prev.height, prev.width
    wy, wx = trapezoid(h, grid), trapezoid(w, grid)
    for r0, r1 in blocks(h, grid):
        for c0, c1 in blocks(w, grid):
            cums = []
            for m in mags:
                hist = [0] * bins
                for i in range(r0, r1):
                    for j in range(c0, c1):
                        val = m[i][j] * wy[i] * wx[j]
                        hist[min(int(math.floor(val * bins / 255.0)), bins - 1)] += 1
                area = (r1 - r0) * (c1 - c0)
                acc, cum = 0.0, []
                for c in hist:
                    acc += c / area
                    cum.append(acc)
                cums.append(cum)
            total += sum(abs(x - y) for x, y in zip(*cums)) / (bins - 1)
            ncell += 1
    return _clamp(total / ncell, 0.0, 1.0)


def color_hist(frame, bins=16):
    rgb = frame_rgb(frame)
    n = frame.width * frame.height
    hist = [[0] * bins for _ in range(3)]
    for row in rgb:
        for px in row:
            for c in range(3):
                hist[c][px[c] * bins // 256] += 1
    return [[x / n for x in ch] for ch in hist]


def color_diff(prev, cur, bins=16):
    hp, hc = color_hist(prev, bins), color_hist(cur, bins)
    return [abs(hc[c][k] - hp[c][k]) for c in range(3) for k in range(bins)]


def edge_block(prev, cur, edge_thresh=64.0, block_thresh=0.15, grid=10):
    mags = [sobel(prev.y.tolist()), sobel(cur.y.tolist())]
    changed = 0
    for r0, r1 in blocks(prev.height, grid):
        for c0, c1 in blocks(prev.width, grid):
            dens = []
            for m in mags:
                cnt = sum(1 for i in range(r0, r1) for j in range(c0, c1) if m[i][j] >= edge_thresh)
                dens.append(cnt / ((r1 - r0) * (c1 - c0)))
            if abs(dens[1] - dens[0]) > block_thresh:
                changed += 1
    return changed / (grid * grid)


def bhattacharyya_hist(p, q):
    sp, sq = sum(p), sum(q)
    bc = sum(math.sqrt((a / sp) * (b / sq)) for a, b in zip(p, q))
    return math.sqrt(1.0 - min(bc, 1.0))


def bhatta(prev, cur, bins=32):
    hists = []
    for f in (prev, cur):
        hist = [0] * bins
        for row in f.y.tolist():
            for v in row:
                hist[v * bins // 256] += 1
        hists.append(hist)
    return bhattacharyya_hist(*hists)


def content(prev, cur):
    a, b = frame_rgb(prev), frame_rgb(cur)
    dh = ds = dv = 0.0
    n = 0
    for ra, rb in zip(a, b):
        for pa, pb in zip(ra, rb):
            ha, sa, va = pixel_hsv(pa)
            hb, sb, vb = pixel_hsv(pb)
            d = abs(ha - hb)
            dh += min(d, 360.0 - d)
            ds += abs(sa - sb)
            dv += abs(va - vb)
            n += 1
    return (dh / n / 180.0 + ds / n + dv / n) / 3.0


def all_scalars(prev, cur):
    bm, bs = block_stats(prev, cur)
    return [bm, bs, cumedge(prev, cur), edge_block(prev, cur), bhatta(prev, cur), content(prev, cur)]


# ---------------------------------------------------------------------------
# boosting


def root_split(X, g, h, lam, min_leaf):
    """Best (gain, feature, threshold) over every feature and midpoint, scanning naively.

    Ties resolve to the lowest feature, then the lowest threshold.
    """
    n = len(X)
    d = len(X[0])
    G, H = sum(g), sum(h)
    best = None
    for f in range(d):
        values = sorted(set(row[f] for row in X))
        for lo, hi in zip(values, values[1:]):
            thr = lo + (hi - lo) / 2.0
            if not lo < thr:
                thr = hi
            left = [i for i in range(n) if X[i][f] < thr]
            if len(left) < min_leaf or n - len(left) < min_leaf:
                continue
            GL = sum(g[i] for i in left)
            HL = sum(h[i] for i in left)
            GR, HR = G - GL, H - HL
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam))
            if gain > 0 and (best is None or gain > best[0]):
                best = (gain, f, thr)
    return best
