from boltzgap.collision.matrix import CollisionMatrix, dump_matrix, load_matrix, quadratic_form

__all__ = ["CollisionMatrix", "dump_matrix", "load_matrix", "quadratic_form"]
