import nonexistent_module_xyz
