import torch


def conjugate_gradient(f_Ax, b, cg_iters=10, residual_tol=1e-10):
    """
    Solve A x = b for symmetric positive definite A given only products A p.

    Args:
        f_Ax (callable): maps a vector p to A p.
        b (torch.Tensor): right-hand side, 1-D.
        cg_iters (int): maximum number of iterations.
        residual_tol (float): stop once r·r falls below this.

    Returns:
        x (torch.Tensor): approximate solution.
    """
    x = torch.zeros_like(b)
    r = b.clone()
    p = b.clone()
    rdotr = torch.dot(r, r)
    for _ in range(cg_iters):
        if rdotr < residual_tol:
            break
        z = f_Ax(p)
        pz = torch.dot(p, z)
        if pz <= 0:
            break
        alpha = rdotr / pz
        x += alpha * p
        r -= alpha * z
        new_rdotr = torch.dot(r, r)
        p = r + (new_rdotr / rdotr) * p
        rdotr = new_rdotr
    return x


def flat_concat(tensors):
    return torch.cat([t.reshape(-1) for t in tensors])


def split_like(flat, like):
    out = []
    offset = 0
    for t in like:
        n = t.numel()
        out.append(flat[offset : offset + n].reshape(t.shape))
        offset += n
    if offset != flat.numel():
        raise ValueError(f"flat vector has {flat.numel()} entries, expected {offset}")
    return out


def normalize(x, eps=1e-8):
    if x.numel() < 2:
        return x.clone()
    return (x - x.mean()) / (x.std(unbiased=False) + eps)
