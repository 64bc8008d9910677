/** Loop through each of the columns in the given table, migrating each as a resource or relation. */
public List migrateColumns(Table table, Migrator migrator) {
    List results = new ArrayList();
    int total = table.getColumnCount();
    int index = 0;
    Column current = null;
    for (index = 0; index < total; index++) {
        current = table.getColumn(index);
        if (current.isResource()) {
            results.add(migrator.migrateResource(current));
        } else {
            results.add(migrator.migrateRelation(current));
        }
    }
    return results;
}
