"""Numba kernels for tile-binned blending and its backward pass.

Splats are addressed through a flat list of (tile, splat) pairs sorted by tile
and, within a tile, by global depth order.  Every tile owns its pixels and its
slice of the pair list, so tiles run in parallel without write conflicts.
"""
import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def forward_tiles(means, conics, opacities, colors, pair_splat, tile_start,
                  width, height, tile_size, n_tiles_x, background,
                  t_floor, alpha_min, alpha_max,
                  image, final_t, n_contrib):
    n_tiles = tile_start.shape[0] - 1
    for tile in prange(n_tiles):
        ty = tile // n_tiles_x
        tx = tile - ty * n_tiles_x
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        start = tile_start[tile]
        end = tile_start[tile + 1]
        for py in range(y0, y1):
            pyf = py + 0.5
            for px in range(x0, x1):
                pxf = px + 0.5
                T = 1.0
                c0 = 0.0
                c1 = 0.0
                c2 = 0.0
                last = start
                for j in range(start, end):
                    s = pair_splat[j]
                    dx = pxf - means[s, 0]
                    dy = pyf - means[s, 1]
                    power = -0.5 * (conics[s, 0] * dx * dx + conics[s, 2] * dy * dy) - conics[s, 1] * dx * dy
                    if power > 0.0:
                        continue
                    alpha = min(alpha_max, opacities[s] * np.exp(power))
                    if alpha < alpha_min:
                        continue
                    test_t = T * (1.0 - alpha)
                    if test_t < t_floor:
                        break
                    w = alpha * T
                    c0 += colors[s, 0] * w
                    c1 += colors[s, 1] * w
                    c2 += colors[s, 2] * w
                    T = test_t
                    last = j + 1
                image[py, px, 0] = c0 + T * background[0]
                image[py, px, 1] = c1 + T * background[1]
                image[py, px, 2] = c2 + T * background[2]
                final_t[py, px] = T
                n_contrib[py, px] = last


@njit(cache=True, parallel=True)
def backward_tiles(means, conics, opacities, colors, pair_splat, tile_start,
                   width, height, tile_size, n_tiles_x, background,
                   alpha_min, alpha_max, final_t, n_contrib, d_pixels,
                   g_mean, g_conic, g_opacity, g_color):
    n_tiles = tile_start.shape[0] - 1
    for tile in prange(n_tiles):
        ty = tile // n_tiles_x
        tx = tile - ty * n_tiles_x
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        start = tile_start[tile]
        for py in range(y0, y1):
            pyf = py + 0.5
            for px in range(x0, x1):
                pxf = px + 0.5
                d0 = d_pixels[py, px, 0]
                d1 = d_pixels[py, px, 1]
                d2 = d_pixels[py, px, 2]
                if d0 == 0.0 and d1 == 0.0 and d2 == 0.0:
                    continue
                t_final = final_t[py, px]
                T = t_final
                bg_dot = background[0] * d0 + background[1] * d1 + background[2] * d2
                acc0 = 0.0
                acc1 = 0.0
                acc2 = 0.0
                last_alpha = 0.0
                lc0 = 0.0
                lc1 = 0.0
                lc2 = 0.0
                for j in range(n_contrib[py, px] - 1, start - 1, -1):
                    s = pair_splat[j]
                    dx = pxf - means[s, 0]
                    dy = pyf - means[s, 1]
                    a = conics[s, 0]
                    b = conics[s, 1]
                    c = conics[s, 2]
                    power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                    if power > 0.0:
                        continue
                    G = np.exp(power)
                    raw = opacities[s] * G
                    alpha = min(alpha_max, raw)
                    if alpha < alpha_min:
                        continue
                    T = T / (1.0 - alpha)
                    w = alpha * T
                    col0 = colors[s, 0]
                    col1 = colors[s, 1]
                    col2 = colors[s, 2]
                    acc0 = last_alpha * lc0 + (1.0 - last_alpha) * acc0
                    acc1 = last_alpha * lc1 + (1.0 - last_alpha) * acc1
                    acc2 = last_alpha * lc2 + (1.0 - last_alpha) * acc2
                    lc0 = col0
                    lc1 = col1
                    lc2 = col2
                    g_color[j, 0] += w * d0
                    g_color[j, 1] += w * d1
                    g_color[j, 2] += w * d2
                    d_alpha = ((col0 - acc0) * d0 + (col1 - acc1) * d1 + (col2 - acc2) * d2) * T
                    d_alpha -= t_final / (1.0 - alpha) * bg_dot
                    last_alpha = alpha
                    if raw > alpha_max:
                        continue
                    g_opacity[j] += G * d_alpha
                    dG = opacities[s] * d_alpha * G
                    g_mean[j, 0] += dG * (a * dx + b * dy)
                    g_mean[j, 1] += dG * (c * dy + b * dx)
                    g_conic[j, 0] += -0.5 * dx * dx * dG
                    g_conic[j, 1] += -dx * dy * dG
                    g_conic[j, 2] += -0.5 * dy * dy * dG
